import datetime as dt

import pytest

from vcfclass.manifest import (CohortManifest, PatientEntry, StudyRecord,
                               load_manifest, save_manifest, years_between)


def study(sid="S0", pid="P0", date="2020-01-01", age=57.0, gender="F",
          truth=None):
    return StudyRecord(study_id=sid, patient_id=pid, acquisition_date=date,
                       age=age, gender=gender, volume_path=f"{pid}/{sid}.vvol",
                       labelmap_path=f"{pid}/{sid}.vlbl",
                       vertebra_truth=truth or {1: "OSTEOPOROTIC"})


def test_roundtrip(tmp_path):
    m = CohortManifest(patients=(
        PatientEntry("P0", (study("S0", date="2020-01-01"),
                            study("S1", date="2020-07-01"))),
        PatientEntry("P1", (study("S0", pid="P1", gender="M",
                                  truth={2: "NEOPLASTIC", 1: "UNFRACTURED"}),)),
    ))
    path = tmp_path / "manifest.json"
    save_manifest(m, path)
    again = load_manifest(path)
    assert again == m
    save_manifest(again, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_dates_must_increase():
    with pytest.raises(ValueError, match="strictly increasing"):
        PatientEntry("P0", (study("S0", date="2020-07-01"),
                            study("S1", date="2020-01-01")))


def test_date_ties_rejected():
    with pytest.raises(ValueError, match="strictly increasing"):
        PatientEntry("P0", (study("S0"), study("S1")))


def test_duplicate_patient_ids():
    with pytest.raises(ValueError, match="duplicate"):
        CohortManifest(patients=(PatientEntry("P0", (study(),)),
                                 PatientEntry("P0", (study("S9"),))))


def test_bad_values_rejected():
    with pytest.raises(ValueError, match="age"):
        study(age=-1)
    with pytest.raises(ValueError, match="gender"):
        study(gender="X")
    with pytest.raises(ValueError, match="truth"):
        study(truth={1: "BROKEN"})
    with pytest.raises(ValueError):
        study(date="not-a-date")


def test_fractured_instance_count(small_cohort):
    spec, manifest, _ = small_cohort
    # topmost vertebra per patient stays unfractured
    per_study = spec.vertebrae_per_patient - 1
    assert manifest.fractured_instance_count() == \
        spec.n_patients * spec.studies_per_patient * per_study


def test_years_between():
    assert years_between(dt.date(2020, 1, 1), dt.date(2020, 1, 1)) == 0.0
    assert years_between(dt.date(2019, 1, 1), dt.date(2020, 1, 1)) == 365 / 365.25
