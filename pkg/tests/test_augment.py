"""Transform application, inversion, and the default augmentation set."""

import numpy as np
import pytest

from conftest import random_pair, random_volume, smooth_blob_field
from petct_tta.augment import (
    IDENTITY,
    AugmentationSet,
    TransformSpec,
    apply,
    apply_spatial,
    default_augmentation_set,
    invert_on_prediction,
    inverse_spec,
    is_spatial,
)
from petct_tta.errors import ParameterError
from petct_tta.fusion import binarize
from petct_tta.volume import Volume3D, mask_from_volume

FLIP1 = TransformSpec("flip", axis=1)
ROT_XY = TransformSpec("rotate90", plane="xy", k=1)
ZOOM_IN = TransformSpec("zoom", factor=1.1)


class TestApply:
    def test_identity_returns_inputs(self):
        rng = np.random.default_rng(0)
        ct, pet = random_pair(rng)
        out_ct, out_pet = apply(IDENTITY, ct, pet)
        assert out_ct is ct and out_pet is pet

    def test_flip_moves_hot_voxel(self):
        data = np.zeros((4, 4, 4), np.float32)
        data[0, 1, 2] = 1.0
        vol = Volume3D(data)
        out_ct, out_pet = apply(FLIP1, vol, vol)
        assert out_ct.data[3, 1, 2] == 1.0
        assert out_ct.data[0, 1, 2] == 0.0
        assert np.array_equal(out_ct.data, out_pet.data)

    def test_geometry_mismatch_rejected(self):
        rng = np.random.default_rng(1)
        ct = random_volume(rng, (4, 4, 4))
        pet = random_volume(rng, (4, 4, 5))
        with pytest.raises(ParameterError):
            apply(FLIP1, ct, pet)

    def test_noise_is_deterministic(self):
        rng = np.random.default_rng(2)
        ct, pet = random_pair(rng)
        spec = TransformSpec("noise", sigma=0.1, seed=7, target="ct")
        first = apply(spec, ct, pet)
        second = apply(spec, ct, pet)
        assert np.array_equal(first[0].data, second[0].data)
        assert first[1] is pet  # PET untouched for target=ct

    def test_noise_sigma_zero_is_identity(self):
        rng = np.random.default_rng(3)
        ct, pet = random_pair(rng)
        spec = TransformSpec("noise", sigma=0.0, seed=1, target="both")
        out_ct, out_pet = apply(spec, ct, pet)
        assert np.array_equal(out_ct.data, ct.data)
        assert np.array_equal(out_pet.data, pet.data)

    def test_shift_adds_constant_span_fraction(self):
        rng = np.random.default_rng(4)
        ct, pet = random_pair(rng)
        spec = TransformSpec("shift", offset=0.1, target="pet")
        _, out_pet = apply(spec, ct, pet)
        span = float(pet.data.max() - pet.data.min())
        shift = out_pet.data - pet.data
        assert np.allclose(shift, 0.1 * span, atol=1e-5)
        # histogram shape is translation-invariant
        out_span = float(out_pet.data.max() - out_pet.data.min())
        assert out_span == pytest.approx(span, abs=1e-4)

    def test_dims_spacing_origin_preserved(self):
        rng = np.random.default_rng(5)
        ct, pet = random_pair(rng, dims=(6, 6, 6))
        for spec in default_augmentation_set():
            out_ct, out_pet = apply(spec, ct, pet)
            for vol in (out_ct, out_pet):
                assert vol.dims == ct.dims
                assert vol.spacing == ct.spacing
                assert vol.origin == ct.origin

    def test_rotate90_on_nonsquare_plane_rejected(self):
        rng = np.random.default_rng(6)
        ct, pet = random_pair(rng, dims=(4, 6, 4))
        with pytest.raises(ParameterError, match="equal dims"):
            apply(ROT_XY, ct, pet)
        # half turn preserves dims and is fine on any plane shape
        half = TransformSpec("rotate90", plane="xy", k=2)
        out_ct, _ = apply(half, ct, pet)
        assert out_ct.dims == ct.dims


class TestInversion:
    @pytest.mark.parametrize("axis", [1, 2, 3])
    def test_flip_involution_bitwise(self, axis):
        rng = np.random.default_rng(10 + axis)
        spec = TransformSpec("flip", axis=axis)
        for _ in range(25):
            prob = random_volume(rng, tuple(rng.integers(2, 8, 3)))
            out = invert_on_prediction(spec, apply_spatial(spec, prob))
            assert np.array_equal(out.data, prob.data)

    @pytest.mark.parametrize("plane,k", [("xy", 1), ("yz", 2), ("xz", 3)])
    def test_rotate90_roundtrip_bitwise(self, plane, k):
        rng = np.random.default_rng(20 + k)
        spec = TransformSpec("rotate90", plane=plane, k=k)
        for _ in range(25):
            prob = random_volume(rng, (6, 6, 6))
            out = invert_on_prediction(spec, apply_spatial(spec, prob))
            assert np.array_equal(out.data, prob.data)

    @pytest.mark.parametrize("factor", [1.1, 0.9])
    def test_zoom_roundtrip_on_smooth_field(self, factor):
        rng = np.random.default_rng(30)
        spec = TransformSpec("zoom", factor=factor)
        for _ in range(3):
            prob = Volume3D(smooth_blob_field(rng))
            out = invert_on_prediction(spec, apply_spatial(spec, prob))
            assert out.dims == prob.dims
            assert np.abs(out.data - prob.data).max() <= 0.05

    def test_intensity_kinds_pass_through(self):
        rng = np.random.default_rng(31)
        prob = random_volume(rng)
        for spec in (TransformSpec("shift", offset=0.2),
                     TransformSpec("noise", sigma=0.1, seed=3),
                     IDENTITY):
            assert invert_on_prediction(spec, prob) is prob

    def test_inverse_spec_values(self):
        assert inverse_spec(FLIP1) == FLIP1
        assert inverse_spec(ROT_XY) == TransformSpec("rotate90", plane="xy", k=3)
        assert inverse_spec(ZOOM_IN).factor == pytest.approx(1 / 1.1)

    def test_spatial_commutes_with_binarization(self):
        rng = np.random.default_rng(32)
        for spec in (FLIP1, TransformSpec("flip", axis=3), ROT_XY):
            prob = random_volume(rng, (6, 6, 6))
            transformed = apply_spatial(spec, prob)
            a = binarize(invert_on_prediction(spec, transformed), 0.5)
            b = invert_on_prediction(spec, transformed)
            b_mask = mask_from_volume(b, 0.5)
            direct = mask_from_volume(transformed, 0.5)
            inverted_mask_data = apply_spatial(
                inverse_spec(spec), direct.to_volume()
            ).data.astype(np.uint8)
            assert np.array_equal(a.data, inverted_mask_data)
            assert np.array_equal(b_mask.data, inverted_mask_data)


class TestIsSpatial:
    def test_table(self):
        assert is_spatial(FLIP1)
        assert is_spatial(ROT_XY)
        assert is_spatial(ZOOM_IN)
        assert not is_spatial(IDENTITY)
        assert not is_spatial(TransformSpec("shift", offset=0.1))
        assert not is_spatial(TransformSpec("noise", sigma=0.05, seed=0))


class TestDefaultSet:
    def test_shape_and_order(self):
        augs = default_augmentation_set()
        assert len(augs) == 11
        assert augs.specs[0] == IDENTITY
        flip_axes = {s.axis for s in augs if s.kind == "flip"}
        assert flip_axes == {1, 2, 3}
        zooms = sorted(s.factor for s in augs if s.kind == "zoom")
        assert zooms == [0.9, 1.1]
        noise_targets = {s.target for s in augs if s.kind == "noise"}
        shift_targets = {s.target for s in augs if s.kind == "shift"}
        assert noise_targets == {"ct", "pet"}
        assert shift_targets == {"ct", "pet"}


class TestSerialization:
    def test_roundtrip(self):
        augs = default_augmentation_set()
        assert AugmentationSet.from_json(augs.to_json()) == augs

    def test_wire_format(self):
        doc = [{"kind": "identity"}, {"kind": "flip", "axis": 1},
               {"kind": "noise", "sigma": 0.05, "seed": 7, "target": "ct"}]
        augs = AugmentationSet.from_json(doc)
        assert augs.specs[1] == TransformSpec("flip", axis=1)
        assert augs.specs[2].sigma == 0.05

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            TransformSpec.from_json({"kind": "blur", "sigma": 1.0})

    def test_unknown_field_rejected(self):
        with pytest.raises(ParameterError):
            TransformSpec.from_json({"kind": "flip", "axis": 1, "angle": 30})

    def test_irrelevant_field_rejected(self):
        with pytest.raises(ParameterError):
            TransformSpec("flip", axis=1, sigma=0.5)

    def test_set_invariants(self):
        with pytest.raises(ParameterError, match="identity"):
            AugmentationSet((FLIP1,))
        with pytest.raises(ParameterError, match="duplicate"):
            AugmentationSet((IDENTITY, FLIP1, FLIP1))
        with pytest.raises(ParameterError):
            AugmentationSet(())

    def test_parameter_domains(self):
        with pytest.raises(ParameterError):
            TransformSpec("flip", axis=4)
        with pytest.raises(ParameterError):
            TransformSpec("zoom", factor=2.5)
        with pytest.raises(ParameterError):
            TransformSpec("shift", offset=1.5)
        with pytest.raises(ParameterError):
            TransformSpec("noise", sigma=-0.1)
        with pytest.raises(ParameterError):
            TransformSpec("rotate90", plane="xw", k=1)
