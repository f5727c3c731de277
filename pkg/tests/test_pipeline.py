import json
from pathlib import Path

import numpy as np
import pytest
import torch
import yaml

from reorient.filter import CubeFilter, FilterConfig
from reorient.pipeline import (
    GravitySchedule,
    PipelineConfig,
    STAGE_WIRING,
    STAGES,
    inloop_termination,
    load_filter_checkpoint,
    load_policy_checkpoint,
    run_pipeline,
    save_filter_checkpoint,
    save_policy_checkpoint,
)
from reorient.policy import SACConfig, SACTrainer


class TestStageWiring:
    def test_reward_and_state_source_per_stage(self):
        assert STAGE_WIRING["s1"] == {"reward": "goal", "state_source": "noisy_sim", "alpha": 0.5}
        assert STAGE_WIRING["s2"]["reward"] == "simple"
        assert STAGE_WIRING["s2"]["state_source"] == "noisy_sim"
        assert STAGE_WIRING["s2"]["alpha"] == 0.7
        assert STAGE_WIRING["s5"]["reward"] == "estimator"
        assert STAGE_WIRING["s5"]["state_source"] == "estimator"

    def test_stage_order(self):
        assert STAGES == ("s1", "s2", "s3", "s4", "s5")


class TestInloopTermination:
    def test_thresholds(self):
        assert not inloop_termination(0.014, 0.79)
        assert inloop_termination(0.016, 0.0)
        assert inloop_termination(0.0, 0.81)
        assert not inloop_termination(0.0, 0.0)

    def test_boundary_is_strict(self):
        assert not inloop_termination(0.015, 0.8)


class TestGravitySchedule:
    def test_success_gated_ramp(self):
        g = GravitySchedule(gate=0.4, patience_steps=10_000)
        assert g.scale == 0.0
        g.update(0.5, 100, 100)
        assert g.scale == pytest.approx(0.1)
        g.update(0.1, 200, 100)  # below gate, patience not reached
        assert g.scale == pytest.approx(0.1)

    def test_patience_forces_completion(self):
        g = GravitySchedule(gate=0.99, patience_steps=100)
        for k in range(60):
            g.update(0.0, (k + 1) * 50, 50)
        assert g.scale == 1.0

    def test_trace_monotone_and_ends_at_one(self):
        g = GravitySchedule(gate=0.2, patience_steps=200)
        rng = np.random.default_rng(0)
        for k in range(100):
            g.update(float(rng.uniform(0, 0.5)), (k + 1) * 50, 50)
        scales = [s for _, s in g.trace]
        assert all(b >= a for a, b in zip(scales, scales[1:]))
        assert scales[-1] == 1.0


class TestCheckpoints:
    def test_policy_round_trip(self, tmp_path):
        cfg = SACConfig(hidden=(8,))
        tr = SACTrainer(10, 12, act_dim=3, cfg=cfg, seed=0)
        save_policy_checkpoint(tmp_path / "p.pt", tr, "s1", extra={"bench_rate": 0.25})
        tr2, payload = load_policy_checkpoint(tmp_path / "p.pt")
        assert payload["stage"] == "s1"
        assert payload["bench_rate"] == 0.25
        obs = torch.randn(2, 10)
        assert torch.equal(
            tr.actor.act(obs, deterministic=True), tr2.actor.act(obs, deterministic=True)
        )

    def test_filter_round_trip(self, tmp_path):
        models = CubeFilter.create(FilterConfig(hidden=(8,)), seed=1)
        models.data_sigma = np.arange(10.0)
        save_filter_checkpoint(tmp_path / "f.pt", models, "s3")
        back, payload = load_filter_checkpoint(tmp_path / "f.pt")
        assert payload["stage"] == "s3"
        np.testing.assert_array_equal(back.data_sigma, models.data_sigma)
        for pa, pb in zip(models.proposal.parameters(), back.proposal.parameters()):
            assert torch.equal(pa, pb)

    def test_kind_mismatch_rejected(self, tmp_path):
        models = CubeFilter.create(FilterConfig(hidden=(8,)), seed=2)
        save_filter_checkpoint(tmp_path / "f.pt", models, "s3")
        with pytest.raises(ValueError):
            load_policy_checkpoint(tmp_path / "f.pt")


class TestPipelineConfig:
    def test_from_yaml(self, tmp_path):
        raw = {
            "name": "t",
            "seed": 3,
            "sac": {"hidden": [16, 16], "batch_size": 32},
            "filter": {"hidden": [8], "n_particles": 10, "n_particles_train": 4},
            "filter_train": {"seq_len": 25},
            "s1_steps": 123,
        }
        p = tmp_path / "cfg.yaml"
        p.write_text(yaml.safe_dump(raw))
        cfg = PipelineConfig.from_yaml(p)
        assert cfg.name == "t"
        assert cfg.sac.hidden == (16, 16)
        assert cfg.filter.n_particles == 10
        assert cfg.filter_train.seq_len == 25
        assert cfg.s1_steps == 123

    def test_packaged_profiles_parse(self):
        import reorient

        root = Path(reorient.__file__).parent / "configs"
        for name in ("tiny.yaml", "desk.yaml"):
            cfg = PipelineConfig.from_yaml(root / name)
            assert cfg.s1_steps > 0


class TestResume:
    def test_missing_prerequisite_is_configuration_error(self, tmp_path):
        cfg = PipelineConfig(name="empty")
        with pytest.raises(FileNotFoundError):
            run_pipeline(cfg, tmp_path, from_stage="s3")
