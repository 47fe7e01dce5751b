import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_oed import structural_model as sm
from robust_oed.errors import InvalidConfigError, RankDeficiencyError, ResonanceError


def chain_config(**over):
    """Two 1-DoF nodes: ground - k1 - node0 - k2 - node1."""
    cfg = {
        "dofs_per_node": 1,
        "tiers": [{"nodes": 1, "mass": 1.0}, {"nodes": 1, "mass": 1.0}],
        "springs": [{"i": 0, "j": None, "stiffness": 1.0}, {"i": 0, "j": 1, "stiffness": 1.0}],
        "observed_dofs": "all",
        "loaded_dofs": [0],
        "frequency": 0.5,
    }
    cfg.update(over)
    return cfg


class TestAssembly:
    def test_single_dof_oracle(self):
        cfg = {
            "dofs_per_node": 1,
            "tiers": [{"nodes": 1, "mass": 1.0}],
            "springs": [{"i": 0, "j": None, "stiffness": 1.0}],
            "observed_dofs": [0],
            "loaded_dofs": [0],
            "frequency": 2.0,
        }
        _, frf = sm.frf_from_config(cfg)
        # -w^2 / (k + w^2 m) = -4/5
        assert frf.entries.shape == (1, 1)
        assert frf.entries[0, 0] == pytest.approx(-0.8, abs=1e-14)

    def test_chain_stiffness(self):
        model = sm.assemble_tiered_model(chain_config())
        np.testing.assert_array_equal(model.stiffness, [[2.0, -1.0], [-1.0, 1.0]])
        np.testing.assert_array_equal(model.mass, np.eye(2))
        assert model.damping.sum() == 0.0

    def test_rayleigh_damping(self):
        model = sm.assemble_tiered_model(chain_config(rayleigh={"alpha": 0.1, "beta": 0.01}))
        np.testing.assert_allclose(model.damping, 0.1 * model.mass + 0.01 * model.stiffness)

    def test_matrices_read_only(self):
        model = sm.assemble_tiered_model(chain_config())
        with pytest.raises(ValueError):
            model.stiffness[0, 0] = 5.0

    def test_directional_spring_block(self):
        e = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        block = sm.spring_block({"stiffness": 3.0, "shear": 1.0, "direction": e}, 3)
        np.testing.assert_allclose(block @ e, 3.0 * e)
        np.testing.assert_allclose(block @ [0, 0, 1.0], [0, 0, 1.0])

    def test_rigid_body_mode_rejected(self):
        cfg = chain_config(springs=[{"i": 0, "j": 1, "stiffness": 1.0}])
        with pytest.raises(InvalidConfigError, match="singular"):
            sm.assemble_tiered_model(cfg)


class TestFRF:
    @pytest.mark.parametrize("convention", ["plus-mass", "standard"])
    def test_brute_force_inverse(self, convention):
        cfg = chain_config(rayleigh={"alpha": 0.05, "beta": 0.02}, sign_convention=convention,
                           loaded_dofs=[0, 1])
        model = sm.assemble_tiered_model(cfg)
        w = 0.5
        K, C, M = model.stiffness, model.damping, model.mass
        A = K - 1j * w * C + w**2 * M if convention == "plus-mass" else K + 1j * w * C - w**2 * M
        ref = -(w**2) * np.linalg.inv(A)
        resp = sm.complex_response(model, w)
        np.testing.assert_allclose(resp, ref, rtol=1e-13, atol=1e-15)
        for mode, fn in [("real_part", np.real), ("imaginary_part", np.imag), ("magnitude", np.abs)]:
            np.testing.assert_allclose(sm.compute_frf(model, w, mode).entries, fn(ref), rtol=1e-12, atol=1e-15)
        stacked = sm.compute_frf(model, w, "stacked_real_imag")
        assert stacked.entries.shape == (4, 2)
        assert stacked.sensor_labels[2][1].endswith(".im")

    def test_reciprocity(self):
        model = sm.assemble_tiered_model(chain_config(loaded_dofs=[0, 1], rayleigh={"alpha": 0.1, "beta": 0.0}))
        T = sm.compute_frf(model, 0.7).entries
        np.testing.assert_allclose(T, T.T, rtol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(0.1, 10.0), omega=st.floats(0.05, 3.0))
    def test_mass_stiffness_scaling(self, scale, omega):
        base = chain_config(loaded_dofs=[0, 1])
        scaled = chain_config(
            loaded_dofs=[0, 1],
            tiers=[{"nodes": 1, "mass": scale}, {"nodes": 1, "mass": scale}],
            springs=[{"i": 0, "j": None, "stiffness": scale}, {"i": 0, "j": 1, "stiffness": scale}],
        )
        T0 = sm.compute_frf(sm.assemble_tiered_model(base), omega).entries
        T1 = sm.compute_frf(sm.assemble_tiered_model(scaled), omega).entries
        np.testing.assert_allclose(T1 * scale, T0, rtol=1e-10)

    def test_resonance_standard_convention(self):
        cfg = {
            "dofs_per_node": 1,
            "tiers": [{"nodes": 1, "mass": 1.0}],
            "springs": [{"i": 0, "j": None, "stiffness": 1.0}],
            "observed_dofs": [0],
            "loaded_dofs": [0],
            "sign_convention": "standard",
        }
        model = sm.assemble_tiered_model(cfg)
        with pytest.raises(ResonanceError):
            sm.compute_frf(model, 1.0)
        # the plus-mass convention has no real resonance for an undamped system
        plus = sm.assemble_tiered_model({**cfg, "sign_convention": "plus-mass"})
        assert np.isfinite(sm.compute_frf(plus, 1.0).entries).all()

    def test_rank_deficient_frf(self):
        cfg = chain_config(observed_dofs=[1], loaded_dofs=[0, 1])
        with pytest.raises(RankDeficiencyError):
            sm.frf_from_config(cfg)

    def test_predict_response(self, rng):
        _, frf = sm.frf_from_config(chain_config(loaded_dofs=[0, 1]))
        theta = rng.standard_normal(2)
        np.testing.assert_allclose(sm.predict_response(frf, theta), frf.entries @ theta)
        with pytest.raises(ValueError):
            sm.predict_response(frf, np.ones(3))


class TestConfig:
    def test_malformed_json_reports_location(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "tiers": [1,\n}')
        with pytest.raises(InvalidConfigError, match="line 3"):
            sm.load_model_config(p)

    @pytest.mark.parametrize(
        "over, match",
        [
            ({"tiers": [{"nodes": 1, "mass": -1.0}, {"nodes": 1, "mass": 1.0}]}, "mass"),
            ({"springs": [{"i": 0, "j": None, "stiffness": 0.0}]}, "stiffness"),
            ({"observed_dofs": [0, 0]}, "duplicate"),
            ({"loaded_dofs": [5]}, "outside"),
            ({"extraction_mode": "phase"}, "extraction_mode"),
            ({"sign_convention": "other"}, "sign_convention"),
            ({"loaded_dofs": []}, "no loaded"),
        ],
    )
    def test_invalid_configs(self, over, match):
        with pytest.raises(InvalidConfigError, match=match):
            sm.TieredTowerConfig.from_dict(chain_config(**over))

    def test_round_trip(self):
        cfg = sm.TieredTowerConfig.from_dict(sm.demo_config())
        again = sm.TieredTowerConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_node_axis_dofs(self):
        cfg = sm.TieredTowerConfig.from_dict(
            {**chain_config(), "dofs_per_node": 3,
             "springs": [{"i": 0, "j": None, "stiffness": 1.0}, {"i": 0, "j": 1, "stiffness": 1.0}],
             "loaded_dofs": [[1, "z"], [0, 1]]}
        )
        assert cfg.loaded_dofs == (5, 1)


class TestDemo:
    def test_dimensions(self, demo):
        _, model, frf, _ = demo
        assert (frf.n_y, frf.n_theta) == (267, 6)
        levels = model.sensor_levels()
        assert [int(np.sum(levels == k)) for k in range(4)] == [96, 72, 60, 39]

    def test_conditioning(self, demo):
        s = np.linalg.svd(demo[2].entries, compute_uv=False)
        assert s[0] / s[-1] < 100

    def test_upper_tiers_respond_most(self, demo):
        _, model, frf, _ = demo
        levels = model.sensor_levels()
        norms = np.linalg.norm(frf.entries, axis=1)
        med = [np.median(norms[levels == k]) for k in range(4)]
        assert med[3] > med[2] > med[1]

    def test_shipped_config_matches_builtin(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "configs" / "demo_tower.json"
        assert sm.load_model_config(path) == sm.load_model_config("demo")


class TestIO:
    def test_frf_csv_round_trip(self, demo, tmp_path):
        frf = demo[2]
        p = tmp_path / "frf.csv"
        sm.write_frf_csv(frf, p)
        back = sm.read_frf_csv(p)
        np.testing.assert_array_equal(back.entries, frf.entries)
        assert back.sensor_labels == frf.sensor_labels
        assert p.read_text().splitlines()[0] == "sensor_id,node,axis,t_1,t_2,t_3,t_4,t_5,t_6"

    def test_model_round_trip(self, demo, tmp_path):
        model = demo[1]
        sm.save_model(model, tmp_path / "m.npz")
        back = sm.load_model(tmp_path / "m.npz")
        np.testing.assert_array_equal(back.stiffness, model.stiffness)
        assert back.sign_convention == model.sign_convention
        np.testing.assert_array_equal(back.sensor_levels(), model.sensor_levels())
