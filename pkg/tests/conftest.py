import json

import pytest

from lesiontrack.phantom_cohort import generate_cohort

IDENTITY_COHORT = {
    "geometry": {"dims": [64, 64, 64], "spacing": [0.5, 0.5, 0.5]},
    "seed": 11,
    "studies": [
        {
            "patient_id": "p1",
            "study_order": 0,
            "lesions": [
                {"center_mm": [10.0, 10.0, 10.0], "radius_mm": 4.0},
                {"center_mm": [22.0, 22.0, 22.0], "radius_mm": 5.0},
            ],
        },
        {
            "patient_id": "p1",
            "study_order": 1,
            "lesions": [
                {"center_mm": [10.0, 10.0, 10.0], "radius_mm": 4.5},
                {"center_mm": [22.0, 22.0, 22.0], "radius_mm": 5.0},
            ],
        },
        {
            "patient_id": "p2",
            "study_order": 0,
            "lesions": [{"center_mm": [16.0, 16.0, 16.0], "radius_mm": 6.0}],
        },
        {
            "patient_id": "p2",
            "study_order": 1,
            "lesions": [{"center_mm": [16.0, 16.0, 16.0], "radius_mm": 7.0}],
        },
        {
            "patient_id": "p3",
            "study_order": 0,
            "lesions": [
                {"center_mm": [10.0, 10.0, 22.0], "radius_mm": 3.5},
                {"center_mm": [22.0, 10.0, 10.0], "radius_mm": 4.0},
            ],
        },
        {
            "patient_id": "p3",
            "study_order": 1,
            "lesions": [
                {"center_mm": [10.0, 10.0, 22.0], "radius_mm": 3.5},
                {"center_mm": [22.0, 10.0, 10.0], "radius_mm": 5.0},
            ],
        },
    ],
}


def write_cohort(doc: dict, tmp_path, name="cohort"):
    spec_path = tmp_path / f"{name}.json"
    spec_path.write_text(json.dumps(doc))
    return generate_cohort(spec_path, tmp_path / name)


@pytest.fixture
def identity_manifest(tmp_path):
    return write_cohort(IDENTITY_COHORT, tmp_path, "identity")
