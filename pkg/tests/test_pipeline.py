import numpy as np
import pytest

from irsr.backends import RestorerBackend, builtin_backend
from irsr.ensemble import EnsembleConfig, FusionWeights, TileConfig, self_ensemble, tiled_restore
from irsr.errors import BranchError, ConfigError
from irsr.geometry import Transform
from irsr.image import Image
from irsr.pipeline import (
    BranchConfig,
    PipelineConfig,
    load_pipeline_config,
    run_branch,
    run_pipeline,
)

from conftest import loopback_cmd, random_image


class CountingBackend(RestorerBackend):
    def __init__(self, internal_tlc=False):
        self.name = "counting"
        self.scale = 1
        self.supports_internal_tlc = internal_tlc
        self.calls = []

    def restore(self, img):
        self.calls.append((img.height, img.width))
        return img


class TestConfigFile:
    def make(self, tmp_path, text):
        path = tmp_path / "pipeline.ini"
        path.write_text(text)
        return path

    def test_two_branch_roundtrip(self, tmp_path):
        cfg = load_pipeline_config(self.make(tmp_path, """
[pipeline]
scale = 4
weights = 0.5, 0.5
kernel.a = -0.5
kernel.antialias = true

[branch.local]
backend = blur-bicubic
tile = 24
overlap = 8
blend = uniform

[branch.global]
backend = bicubic
ensemble = on
transforms = id, hflip, vflip, rot180
"""))
        assert cfg.scale == 4
        assert cfg.weights.values == (0.5, 0.5)
        assert [b.name for b in cfg.branches] == ["local", "global"]
        assert cfg.branches[0].tiling == TileConfig(24, 8, "uniform")
        assert cfg.branches[0].ensemble is None
        assert cfg.branches[1].tiling is None
        assert cfg.branches[1].ensemble.transforms == (
            Transform.IDENTITY, Transform.HFLIP, Transform.VFLIP, Transform.ROT180,
        )

    def test_external_command_parsed(self, tmp_path):
        cfg = load_pipeline_config(self.make(tmp_path, """
[branch.model]
backend = ext:python -m some_adapter --kind identity
"""))
        branch = cfg.branches[0]
        assert branch.is_external
        assert branch.command() == ["python", "-m", "some_adapter", "--kind", "identity"]
        assert cfg.weights.values == (1.0,)

    def test_default_equal_weights(self, tmp_path):
        cfg = load_pipeline_config(self.make(tmp_path, """
[branch.a]
backend = bicubic
[branch.b]
backend = nearest
"""))
        assert cfg.weights.values == (0.5, 0.5)

    def test_unknown_option_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(self.make(tmp_path, """
[branch.a]
backend = bicubic
sharpen = yes
"""))

    def test_missing_backend_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(self.make(tmp_path, "[branch.a]\ntile = 16\n"))

    def test_unknown_backend_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(self.make(tmp_path, "[branch.a]\nbackend = waifu\n"))

    def test_weight_count_mismatch_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(self.make(tmp_path, """
[pipeline]
weights = 0.5, 0.5
[branch.a]
backend = bicubic
"""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(tmp_path / "absent.ini")


class TestRunBranch:
    def test_tiling_skipped_when_backend_does_internal_tlc(self, rng):
        img = random_image(rng, 40, 40)
        tc = TileConfig(tile=16, overlap=4)
        plain = CountingBackend(internal_tlc=False)
        run_branch(BranchConfig("b", "identity1x", tiling=tc), plain, img)
        assert len(plain.calls) > 1  # tiled

        internal = CountingBackend(internal_tlc=True)
        run_branch(BranchConfig("b", "identity1x", tiling=tc), internal, img)
        assert internal.calls == [(40, 40)]  # single full-image pass

    def test_ensemble_composes_over_tiling(self, rng):
        img = random_image(rng, 24, 24)
        b = CountingBackend()
        tc = TileConfig(tile=16, overlap=4)
        run_branch(BranchConfig("b", "identity1x", tiling=tc,
                                ensemble=EnsembleConfig()), b, img)
        # 8 views, each tiled into a 2x2 grid.
        assert len(b.calls) == 32


class TestRunPipeline:
    def test_two_identical_branches_equal_single(self, rng):
        img = random_image(rng, 9, 12)
        cfg = PipelineConfig(
            branches=(BranchConfig("a", "bicubic"), BranchConfig("b", "bicubic")),
            weights=FusionWeights((0.5, 0.5)),
            scale=4,
        )
        single = builtin_backend("bicubic", 4).restore(img)
        assert np.abs(run_pipeline(cfg, img).data - single.data).max() < 1e-12

    def test_single_branch_weight_one(self, rng):
        img = random_image(rng, 8, 8)
        cfg = PipelineConfig(
            branches=(BranchConfig("only", "blur-bicubic", tiling=TileConfig(16, 4)),),
            weights=FusionWeights((1.0,)),
            scale=4,
        )
        expected = builtin_backend("blur-bicubic", 4).restore(img)
        assert np.array_equal(run_pipeline(cfg, img).data, expected.data)

    def test_fused_equals_half_sum_of_branches(self, rng):
        img = random_image(rng, 16, 20)
        tc = TileConfig(tile=12, overlap=4, blend="uniform")
        cfg = PipelineConfig(
            branches=(
                BranchConfig("local", "blur-bicubic", tiling=tc),
                BranchConfig("global", "bicubic", ensemble=EnsembleConfig()),
            ),
            weights=FusionWeights((0.5, 0.5)),
            scale=4,
        )
        fused = run_pipeline(cfg, img)
        branch_a = tiled_restore(builtin_backend("blur-bicubic", 4), img, tc)
        branch_b = self_ensemble(builtin_backend("bicubic", 4), img)
        recomputed = 0.5 * (branch_a.data + branch_b.data)
        assert np.abs(fused.data - recomputed).max() < 1e-12

    def test_branch_exchange_symmetry(self, rng):
        img = random_image(rng, 10, 10)
        a = BranchConfig("a", "bicubic")
        b = BranchConfig("b", "nearest")
        w = FusionWeights((0.5, 0.5))
        fwd = run_pipeline(PipelineConfig(branches=(a, b), weights=w, scale=4), img)
        rev = run_pipeline(PipelineConfig(branches=(b, a), weights=w, scale=4), img)
        assert np.array_equal(fwd.data, rev.data)

    def test_branch_failure_attributed(self, rng):
        img = random_image(rng, 8, 8, c=3)  # loopback announces 1 channel
        cfg = PipelineConfig(
            branches=(
                BranchConfig("fine", "bicubic"),
                BranchConfig("broken", "ext:" + " ".join(loopback_cmd("--mode", "identity"))),
            ),
            weights=FusionWeights((0.5, 0.5)),
            scale=1,
        )
        with pytest.raises(BranchError) as info:
            run_pipeline(cfg, img)
        assert info.value.branch == "broken"

    def test_duplicate_branch_names_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(
                branches=(BranchConfig("x", "bicubic"), BranchConfig("x", "nearest")),
                weights=FusionWeights((0.5, 0.5)),
            )

    def test_external_backend_through_pipeline(self, rng):
        img = random_image(rng, 6, 7, f32_lattice=True)
        cmd = "ext:" + " ".join(loopback_cmd("--mode", "nearest4"))
        cfg = PipelineConfig(
            branches=(BranchConfig("model", cmd),),
            weights=FusionWeights((1.0,)),
            scale=4,
        )
        out = run_pipeline(cfg, img)
        assert out.shape == (24, 28, 1)

    def test_default_pipeline_mirrors_dual_branch_layout(self):
        cfg = PipelineConfig.default()
        assert cfg.branches[0].tiling is not None
        assert cfg.branches[0].ensemble is None
        assert cfg.branches[1].ensemble is not None
        assert cfg.branches[1].tiling is None
        assert cfg.weights.values == (0.5, 0.5)
