import gzip
import shutil

import numpy as np
import pytest

from lesiontrack import (
    GridGeometry,
    GridMismatchError,
    LabelVolume,
    VolumeFormatError,
    assert_same_grid,
    load_label_volume,
    save_label_volume,
    voxel_volume_cc,
)
from oracles import read_reference_nifti, write_reference_nifti


def test_single_voxel_fixture(tmp_path):
    # authored with the independent reference writer, 1x1x1 at 2 mm iso
    path = tmp_path / "single_voxel_2mm.nii"
    write_reference_nifti(path, np.array([[[1]]]), spacing=(2.0, 2.0, 2.0))
    vol = load_label_volume(path)
    assert vol.geometry.dims == (1, 1, 1)
    assert vol.geometry.spacing == (2.0, 2.0, 2.0)
    assert vol.voxels.tolist() == [[[1]]]


def test_gzip_transparency(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.integers(0, 4, size=(5, 6, 7))
    plain = write_reference_nifti(tmp_path / "x.nii", data, spacing=(0.7, 0.7, 1.5))
    with open(plain, "rb") as src, gzip.open(tmp_path / "x.nii.gz", "wb") as dst:
        shutil.copyfileobj(src, dst)
    a = load_label_volume(plain)
    b = load_label_volume(tmp_path / "x.nii.gz")
    assert a.geometry == b.geometry
    assert np.array_equal(a.voxels, b.voxels)


def test_gzip_sniffed_by_content_not_extension(tmp_path):
    # a .nii that is actually gzipped must still load
    write_reference_nifti(tmp_path / "misnamed.nii", np.ones((2, 2, 2)), gzipped=True)
    vol = load_label_volume(tmp_path / "misnamed.nii")
    assert vol.voxels.sum() == 8


@pytest.mark.parametrize("dtype", ["uint8", "int16", "uint16", "int32", "float32"])
def test_all_accepted_datatypes(tmp_path, dtype):
    data = np.arange(24).reshape(2, 3, 4) % 5
    path = write_reference_nifti(tmp_path / f"{dtype}.nii", data, dtype=dtype)
    vol = load_label_volume(path)
    assert vol.voxels.dtype == np.uint16
    assert np.array_equal(vol.voxels, data)


def test_float_labels_are_rounded(tmp_path):
    data = np.zeros((2, 2, 2), dtype=np.float32)
    data[0, 0, 0] = 0.6
    data[1, 1, 1] = 1.4
    path = tmp_path / "f.nii"
    write_reference_nifti(path, data, dtype="float32")
    vol = load_label_volume(path)
    assert vol.voxels[0, 0, 0] == 1
    assert vol.voxels[1, 1, 1] == 1
    assert vol.voxels.sum() == 2


def test_scl_slope_applied(tmp_path):
    path = write_reference_nifti(tmp_path / "s.nii", np.ones((2, 2, 2)), scl=(2.0, 1.0))
    vol = load_label_volume(path)
    assert int(vol.voxels[0, 0, 0]) == 3


def test_voxel_order_matches_reference_reader(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.integers(0, 3, size=(4, 3, 2))
    path = write_reference_nifti(tmp_path / "o.nii", data)
    vol = load_label_volume(path)
    ref, _, _ = read_reference_nifti(path)
    assert np.array_equal(vol.voxels, ref)
    assert np.array_equal(vol.voxels, data)


def test_round_trip_save_load(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.integers(0, 300, size=(6, 5, 4)).astype(np.uint16)
    vol = LabelVolume(GridGeometry((6, 5, 4), (0.7, 0.8, 2.5), (1.0, -2.0, 3.0)), data)
    for name in ("rt.nii", "rt.nii.gz"):
        save_label_volume(vol, tmp_path / name)
        back = load_label_volume(tmp_path / name)
        assert back.geometry.dims == vol.geometry.dims
        assert back.geometry.spacing == pytest.approx(vol.geometry.spacing, rel=1e-6)
        assert back.geometry.origin == pytest.approx(vol.geometry.origin, rel=1e-6)
        assert np.array_equal(back.voxels, vol.voxels)


def test_saved_file_readable_by_reference_reader(tmp_path):
    data = np.zeros((3, 3, 3), dtype=np.uint16)
    data[1, 2, 0] = 7
    vol = LabelVolume(GridGeometry((3, 3, 3), (1.0, 1.5, 2.0)), data)
    save_label_volume(vol, tmp_path / "w.nii")
    ref, spacing, _ = read_reference_nifti(tmp_path / "w.nii")
    assert np.array_equal(ref, data)
    assert spacing == pytest.approx((1.0, 1.5, 2.0))


def test_load_idempotent(tmp_path):
    data = np.arange(60).reshape(5, 4, 3) % 7
    path = write_reference_nifti(tmp_path / "i.nii", data)
    a = load_label_volume(path)
    b = load_label_volume(path)
    assert np.array_equal(a.voxels, b.voxels)


def test_zero_spacing_rejected(tmp_path):
    path = write_reference_nifti(tmp_path / "z.nii", np.ones((2, 2, 2)), spacing=(0.5, 0.5, 0.0))
    with pytest.raises(VolumeFormatError, match="non-positive spacing"):
        load_label_volume(path)


def test_nan_voxels_rejected(tmp_path):
    data = np.ones((2, 2, 2), dtype=np.float32)
    data[0, 0, 0] = np.nan
    path = write_reference_nifti(tmp_path / "n.nii", data, dtype="float32")
    with pytest.raises(VolumeFormatError, match="NaN"):
        load_label_volume(path)


def test_negative_labels_rejected(tmp_path):
    data = np.zeros((2, 2, 2), dtype=np.int16)
    data[0, 0, 0] = -2
    path = write_reference_nifti(tmp_path / "neg.nii", data)
    with pytest.raises(VolumeFormatError, match="negative label"):
        load_label_volume(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(VolumeFormatError, match="unreadable"):
        load_label_volume(tmp_path / "absent.nii")


def test_garbage_file_rejected(tmp_path):
    bad = tmp_path / "garbage.nii"
    bad.write_bytes(b"definitely not a nifti header" * 20)
    with pytest.raises(VolumeFormatError):
        load_label_volume(bad)


def test_non_3d_rejected(tmp_path):
    import struct

    path = write_reference_nifti(tmp_path / "4d.nii", np.ones((2, 2, 2)))
    raw = bytearray(path.read_bytes())
    struct.pack_into("<h", raw, 40, 4)  # dim[0] = 4
    struct.pack_into("<h", raw, 48, 3)  # dim[4] = 3 timepoints
    path.write_bytes(bytes(raw))
    with pytest.raises(VolumeFormatError, match="non-3D"):
        load_label_volume(path)


def test_trailing_singleton_dims_accepted(tmp_path):
    import struct

    path = write_reference_nifti(tmp_path / "4d1.nii", np.ones((2, 2, 2)))
    raw = bytearray(path.read_bytes())
    struct.pack_into("<h", raw, 40, 4)  # dim[0] = 4 with dim[4] = 1
    path.write_bytes(bytes(raw))
    vol = load_label_volume(path)
    assert vol.geometry.dims == (2, 2, 2)


def test_oblique_affine_rejected(tmp_path):
    rot = [[0.9, 0.44, 0.0], [-0.44, 0.9, 0.0], [0.0, 0.0, 1.0]]
    path = write_reference_nifti(tmp_path / "rot.nii", np.ones((2, 2, 2)), affine3x3=rot)
    with pytest.raises(VolumeFormatError, match="axis-aligned"):
        load_label_volume(path)


def test_flipped_affine_accepted(tmp_path):
    # direction flips carry no rotation/shear; spacing magnitudes drive the metrics
    flip = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    path = write_reference_nifti(tmp_path / "flip.nii", np.ones((2, 2, 2)), affine3x3=flip)
    vol = load_label_volume(path)
    assert vol.geometry.spacing == (1.0, 1.0, 1.0)


def test_voxel_volume_cc():
    assert voxel_volume_cc(GridGeometry((1, 1, 1), (1, 1, 1))) == pytest.approx(0.001)
    assert voxel_volume_cc(GridGeometry((1, 1, 1), (0.5, 0.5, 1))) == pytest.approx(0.00025)
    assert voxel_volume_cc(GridGeometry((1, 1, 1), (10, 10, 10))) == pytest.approx(1.0)


class TestSameGrid:
    def test_reflexive(self):
        vol = LabelVolume(GridGeometry((2, 2, 2), (1, 1, 1)), np.zeros((2, 2, 2), dtype=np.uint8))
        assert_same_grid(vol, vol)

    def test_dim_mismatch_names_axis(self):
        a = GridGeometry((512, 512, 100), (0.7, 0.7, 1.0))
        b = GridGeometry((512, 512, 101), (0.7, 0.7, 1.0))
        with pytest.raises(GridMismatchError, match="dimension mismatch on z"):
            assert_same_grid(a, b)

    def test_spacing_within_tolerance(self):
        a = GridGeometry((4, 4, 4), (0.7, 0.7, 1.0))
        b = GridGeometry((4, 4, 4), (0.7000001, 0.7, 1.0))
        assert_same_grid(a, b, tol=1e-3)

    def test_spacing_mismatch_names_axis(self):
        a = GridGeometry((4, 4, 4), (0.7, 0.7, 1.0))
        b = GridGeometry((4, 4, 4), (0.7, 0.8, 1.0))
        with pytest.raises(GridMismatchError, match="spacing mismatch on y"):
            assert_same_grid(a, b)
