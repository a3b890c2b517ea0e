"""Tests for the search space: genome codec, counting and reference architectures."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from driftnas.errors import InvalidArchitecture, InvalidGenome, ShapeError
from driftnas.sampling import sample_lhs
from driftnas.space import (
    FULL_SPACE,
    GENOME_LENGTH,
    SENTINEL,
    Architecture,
    Counting,
    LayerMatrix,
    MainBlockSpec,
    Mapping,
    SearchSpace,
    arch_id,
    block_slot,
    conv_count,
    decode,
    depth,
    encode,
    from_dict,
    from_json,
    layer_matrices,
    param_count,
    tile_count,
    tile_utilization,
    validate,
    weight_count,
)
from driftnas.zoo import PUBLISHED, ZOO, get


class TestPublishedAnchors:
    def test_resnet32_depth(self, resnet32):
        assert depth(resnet32) == 32

    def test_t500_depth(self, t500):
        assert depth(t500) == 17

    def test_resnet32_crossbar_weights(self, resnet32):
        assert param_count(resnet32, counting=Counting.CROSSBAR) == 464_432
        assert weight_count(resnet32) == 464_432

    def test_resnet32_trainable_params(self, resnet32):
        # 464,432 weights + 2,464 batch-norm + 10 classifier bias
        assert param_count(resnet32) == 466_906

    def test_resnet32_tiles(self, resnet32):
        assert tile_count(layer_matrices(resnet32), 512) == 43

    def test_resnet32_conv_count_includes_projections(self, resnet32):
        # 1 stem + 30 branch convs + 2 projections
        assert conv_count(resnet32) == 33

    def test_forced_projection_leaves_depth(self, small_arch):
        forced = small_arch.with_block(0, st=True)
        assert conv_count(forced) == conv_count(small_arch) + 1
        assert depth(forced) == depth(small_arch)

    @pytest.mark.parametrize("name", PUBLISHED)
    def test_published_genomes_roundtrip(self, name):
        arch = ZOO[name].arch
        assert decode(encode(arch)) == arch

    def test_nine_published_entries(self):
        assert len(PUBLISHED) == 9
        assert "resnet32_cifar" not in PUBLISHED

    def test_unknown_reference(self):
        with pytest.raises(KeyError, match="unknown reference architecture"):
            get("vgg16")


class TestGenomeCodec:
    def test_length_and_sentinel_padding(self, small_arch):
        genome = encode(small_arch)
        assert genome.shape == (GENOME_LENGTH,) == (28,)
        assert np.all(genome[block_slot(1, "r"):] == SENTINEL)

    def test_block_slots(self, t500):
        genome = encode(t500)
        assert genome[:3].tolist() == [64, 5, 1]
        assert genome[block_slot(0, "r")] == 3
        assert genome[block_slot(0, "ct")] == 0  # A

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            decode(np.zeros(10))

    def test_non_integral_slot(self, small_arch):
        genome = encode(small_arch)
        genome[block_slot(0, "r")] = 1.5
        with pytest.raises(InvalidGenome) as exc:
            decode(genome)
        assert exc.value.slot == block_slot(0, "r")

    def test_ct_index_out_of_range(self, small_arch):
        genome = encode(small_arch)
        genome[block_slot(0, "ct")] = 4
        with pytest.raises(InvalidGenome):
            decode(genome)

    def test_slot_beyond_m_must_be_sentinel(self, small_arch):
        genome = encode(small_arch)
        genome[block_slot(2, "wf")] = 2
        with pytest.raises(InvalidGenome, match="sentinel"):
            decode(genome)

    def test_ks0_must_be_a_choice(self, small_arch):
        genome = encode(small_arch)
        genome[1] = 4
        with pytest.raises(InvalidGenome):
            decode(genome)

    def test_nan_slot(self, small_arch):
        genome = encode(small_arch)
        genome[0] = np.nan
        with pytest.raises(InvalidGenome, match="finite"):
            decode(genome)

    def test_skip_flag_roundtrip(self, small_arch):
        arch = small_arch.with_block(0, st=True)
        assert decode(encode(arch)).blocks[0].st is True


class TestArchitectureJson:
    def test_json_roundtrip(self, t500):
        assert from_json(t500.to_json()) == t500

    def test_arch_id_is_stable_hex(self, t500):
        aid = arch_id(t500)
        assert len(aid) == 16
        assert aid == arch_id(from_json(t500.to_json()))
        assert int(aid, 16) >= 0

    def test_arch_id_differs(self, t500, resnet32):
        assert arch_id(t500) != arch_id(resnet32)

    def test_invalid_json(self):
        with pytest.raises(InvalidArchitecture):
            from_json("{not json")

    def test_missing_field(self):
        with pytest.raises(InvalidArchitecture, match="malformed"):
            from_dict({"oc0": 16, "blocks": []})

    def test_out_of_range_rejected(self):
        data = {"oc0": 4, "ks0": 3, "blocks": [{"r": 1, "b": 1, "ct": "B", "wf": 1}]}
        with pytest.raises(InvalidArchitecture, match="oc0=4"):
            from_dict(data)

    def test_unsupported_schema_version(self, t500):
        data = t500.to_dict() | {"schema_version": "99"}
        with pytest.raises(InvalidArchitecture, match="schema_version"):
            from_dict(data)


class TestSearchSpace:
    def test_cardinality_of_small_space(self, small_space):
        # 3 R x 2 B x 2 CT x 2 WF x 2 ST
        assert small_space.cardinality() == 48

    def test_enumerate_matches_cardinality(self, small_space):
        archs = list(small_space.enumerate())
        assert len(archs) == 48
        assert len({arch_id(a) for a in archs}) == 48
        assert all(small_space.contains(a) for a in archs)

    def test_contains(self, small_space, t500):
        assert not small_space.contains(t500)
        assert FULL_SPACE.contains(t500)

    def test_skip_disallowed(self, small_arch):
        space = SearchSpace(allow_skip=False)
        with pytest.raises(InvalidArchitecture, match="skip"):
            validate(small_arch.with_block(0, st=True), space)

    def test_bounds_outside_full_space(self):
        with pytest.raises(ValidationError):
            SearchSpace(r=(1, 20))

    def test_empty_ks0(self):
        with pytest.raises(ValidationError):
            SearchSpace(ks0=())

    def test_clamp(self):
        assert FULL_SPACE.clamp("oc0", 500) == 128
        assert FULL_SPACE.clamp("ks0", 4) == 3


class TestCounting:
    def test_depth_bottleneck_vs_basic(self):
        a = Architecture(oc0=16, ks0=3, blocks=(MainBlockSpec(r=2, b=3, ct="A", wf=1),))
        b = Architecture(oc0=16, ks0=3, blocks=(MainBlockSpec(r=2, b=3, ct="B", wf=1),))
        assert depth(a) == 2 + 2 * (3 + 2)
        assert depth(b) == 2 + 2 * (2 * 3)

    def test_single_block_params_by_hand(self, small_arch):
        # stem 3*3*3*16 + 4 convs 16*16*9 + classifier 16*10, BN 5 convs * 16 * 2, bias 10
        weights = 432 + 4 * 2304 + 160
        assert weight_count(small_arch) == weights
        assert param_count(small_arch) == weights + 5 * 32 + 10

    def test_skip_flag_adds_projection(self, small_arch):
        with_skip = small_arch.with_block(0, st=True)
        assert weight_count(with_skip) == weight_count(small_arch) + 16 * 16

    def test_wider_means_more_params(self, small_arch):
        assert param_count(small_arch.with_block(0, wf=2)) > param_count(small_arch)

    def test_task_shape_changes_counts(self, small_arch):
        assert param_count(small_arch, (1, 49, 10), 12) != param_count(small_arch)

    def test_tile_differential_needs_more_tiles(self, resnet32):
        layers = layer_matrices(resnet32)
        assert tile_count(layers, 512, Mapping.TILE_DIFFERENTIAL) >= tile_count(layers, 512)

    def test_tile_utilization_bounds(self, resnet32):
        util = tile_utilization(layer_matrices(resnet32), 512)
        assert 0.0 < util <= 1.0

    def test_full_tile_utilization(self):
        assert tile_utilization([LayerMatrix(rows=512, cols=256)], 512) == 1.0

    def test_bad_tile_size(self, resnet32):
        with pytest.raises(ShapeError):
            tile_count(layer_matrices(resnet32), 0)


def _count_by_hand(arch: Architecture, num_classes: int = 10) -> int:
    """Trainable parameters of a CIFAR-shaped net, layer by layer.

    Every conv carries a batch norm (2 per output channel); the first residual
    block of main blocks after the first halves the 32x32 input.
    """

    def conv(c_in: int, c_out: int, k: int) -> int:
        return c_in * k * k * c_out + 2 * c_out

    total = conv(3, arch.oc0, arch.ks0)
    c_in = arch.oc0
    for i, blk in enumerate(arch.blocks):
        c_out = arch.oc0 * 2**i * blk.wf
        for rb in range(blk.r):
            halves = rb == 0 and i > 0
            if blk.ct in ("A", "C"):
                mid = max(1, c_out // 4)
                total += conv(c_in, mid, 1) + blk.b * conv(mid, mid, 3) + conv(mid, c_out, 1)
            else:
                total += blk.b * (conv(c_in, c_out, 3) + conv(c_out, c_out, 3))
            if c_in != c_out or halves or (rb == 0 and blk.st):
                total += conv(c_in, c_out, 1)
            c_in = c_out
    return total + c_in * num_classes + num_classes


@pytest.fixture(scope="module")
def sampled():
    """LHS architectures over the full space."""
    return sample_lhs(60, seed=11)


class TestSampledArchitectures:
    def test_param_count_matches_hand_count(self, sampled):
        for arch in sampled:
            assert param_count(arch) == _count_by_hand(arch)

    def test_hand_count_with_skip_projections(self, sampled):
        for arch in sampled[:10]:
            skipped = Architecture(oc0=arch.oc0, ks0=arch.ks0, blocks=tuple(replace(b, st=True) for b in arch.blocks))
            assert param_count(skipped) == _count_by_hand(skipped)

    def test_matrices_sum_to_weight_count(self, sampled):
        for arch in sampled:
            total = sum(lm.rows * lm.cols * lm.count for lm in layer_matrices(arch))
            assert total == weight_count(arch) == param_count(arch, counting=Counting.CROSSBAR)

    def test_more_classes_only_change_the_classifier(self, sampled):
        for arch in sampled:
            ten, twenty = layer_matrices(arch, num_classes=10), layer_matrices(arch, num_classes=20)
            assert ten[:-1] == twenty[:-1]
            c_last = ten[-1].rows
            assert param_count(arch, num_classes=20) - param_count(arch, num_classes=10) == (c_last + 1) * 10

    @pytest.mark.parametrize("mapping", list(Mapping))
    def test_tiles_never_grow_with_tile_size(self, sampled, mapping):
        sizes = [64, 128, 256, 384, 512, 768, 1024]
        for arch in sampled:
            layers = layer_matrices(arch)
            counts = [tile_count(layers, size, mapping) for size in sizes]
            assert counts == sorted(counts, reverse=True)

    def test_genome_roundtrip(self, sampled):
        for arch in sampled:
            genome = encode(arch)
            assert decode(genome) == arch
            np.testing.assert_array_equal(encode(decode(genome)), genome)

    def test_json_roundtrip(self, sampled):
        for arch in sampled:
            assert from_json(arch.to_json()) == arch

    def test_distinct_archs_distinct_genomes(self, sampled):
        unique = set(sampled)
        assert len({tuple(encode(a)) for a in unique}) == len(unique)
