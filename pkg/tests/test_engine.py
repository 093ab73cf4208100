"""Cutoff search and estimators against exhaustive brute force.

The brute-force reference walks every grid point with explicit loops
and applies the selection rule (most rejections, then smallest
criterion, then smallest t1, then smallest t2) one comparison at a
time. Its criterion uses the same arithmetic as the search
(count / (B+1), then the pi0 multiple, then the denominator) so exact
float equality is required, not just closeness.
"""

import warnings

import numpy as np
import pytest

from fdr2d import core, engine


def _random_tensor(rng, m=None, b=None, style="ties"):
    m = m if m is not None else int(rng.integers(3, 31))
    bb = b if b is not None else int(rng.integers(1, 11))
    if style == "ties":
        vals = rng.integers(0, 8, size=(bb + 1, m, 2)).astype(float) / 2.0
    else:
        vals = rng.gamma(2.0, size=(bb + 1, m, 2))
    zv = np.zeros(m, dtype=bool)
    if rng.random() < 0.3 and m > 3:
        idx = rng.choice(m, size=int(rng.integers(1, m // 3 + 1)), replace=False)
        zv[idx] = True
        vals[:, idx, :] = 0.0
    return core.StatTensor(
        pairs=vals, zero_variance=zv, n=50, seed=1, statistic="glm:gaussian",
        sampler="residual-perm",
    )


def _brute_search(tensor, t1v, t2v, q, pi0, mode):
    pairs = tensor.pairs
    b1, m, _ = pairs.shape
    best = None
    for a in range(len(t1v)):
        for c in range(len(t2v)):
            t1 = t1v[a]
            t2 = t2v[c]
            cnt = 0
            for bb in range(b1):
                for j in range(m):
                    if pairs[bb, j, 0] >= t1 and pairs[bb, j, 1] >= t2:
                        cnt += 1
            r = 0
            for j in range(m):
                if tensor.zero_variance[j]:
                    continue
                if pairs[0, j, 0] >= t1 and pairs[0, j, 1] >= t2:
                    r += 1
            sumf = cnt / b1
            crit = pi0 * sumf / max(1, r) if mode == "fdr" else pi0 * sumf
            if crit > q:
                continue
            if best is None:
                best = (r, crit, a, c)
                continue
            br, bc, _, _ = best
            if r > br or (r == br and crit < bc):
                best = (r, crit, a, c)
    if best is None:
        return None
    r, crit, a, c = best
    rej = [
        j
        for j in range(m)
        if not tensor.zero_variance[j]
        and pairs[0, j, 0] >= t1v[a]
        and pairs[0, j, 1] >= t2v[c]
    ]
    return t1v[a], t2v[c], np.array(rej, dtype=np.int64), crit


class TestSearchOracle:
    def test_fdr_matches_brute_force(self):
        rng = np.random.default_rng(101)
        for trial in range(40):
            tensor = _random_tensor(rng, style="ties" if trial % 3 else "smooth")
            grid = engine.make_grid(
                tensor, "observed" if trial % 2 else f"quantile:{int(rng.integers(5, 25))}"
            )
            q = float(rng.choice([0.05, 0.1, 0.2, 0.3]))
            pi0 = float(rng.choice([1.0, 0.7]))
            got = engine._search(tensor, grid, q, pi0, "fdr")
            want = _brute_search(tensor, grid.t1_values, grid.t2_values, q, pi0, "fdr")
            if want is None:
                assert np.isinf(got.t1) and np.isinf(got.t2)
                assert got.n_rejected == 0
            else:
                assert got.t1 == want[0] and got.t2 == want[1]
                np.testing.assert_array_equal(got.rejected, want[2])
                assert got.fdp_estimate == want[3]

    def test_fwer_matches_brute_force(self):
        rng = np.random.default_rng(102)
        for trial in range(25):
            tensor = _random_tensor(rng)
            grid = engine.make_grid(tensor, "observed")
            q = float(rng.choice([0.05, 0.2, 0.5]))
            got = engine._search(tensor, grid, q, 1.0, "fwer")
            want = _brute_search(tensor, grid.t1_values, grid.t2_values, q, 1.0, "fwer")
            if want is None:
                assert np.isinf(got.t1) and got.n_rejected == 0
            else:
                assert got.t1 == want[0] and got.t2 == want[1]
                np.testing.assert_array_equal(got.rejected, want[2])

    def test_one_dim_matches_brute_force(self):
        rng = np.random.default_rng(103)
        for _ in range(15):
            tensor = _random_tensor(rng)
            config = engine.ProcedureConfig(q=0.2, grid="observed")
            got = engine.one_dim_cutoff(tensor, config)
            grid = engine.make_grid(tensor, "observed")
            want = _brute_search(
                tensor, np.zeros(1), grid.t2_values, 0.2, 1.0, "fdr"
            )
            if want is None:
                assert got.n_rejected == 0
            else:
                assert got.t1 == 0.0 and got.t2 == want[1]
                np.testing.assert_array_equal(got.rejected, want[2])

    def test_mf1d_never_beats_mf2d(self):
        rng = np.random.default_rng(104)
        for _ in range(25):
            tensor = _random_tensor(rng)
            config = engine.ProcedureConfig(q=0.1, grid="observed")
            assert (
                engine.optimal_cutoff(tensor, config).n_rejected
                >= engine.one_dim_cutoff(tensor, config).n_rejected
            )

    def test_fwer_never_beats_fdr(self):
        rng = np.random.default_rng(105)
        for _ in range(50):
            tensor = _random_tensor(rng)
            config = engine.ProcedureConfig(q=0.1, grid="observed")
            assert (
                engine.fwer_cutoff(tensor, config).n_rejected
                <= engine.optimal_cutoff(tensor, config).n_rejected
            )

    def test_vacuous_level_rejects_everything(self):
        rng = np.random.default_rng(106)
        pairs = rng.gamma(2.0, size=(5, 12, 2))  # strictly positive, no flags
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(12, bool))
        config = engine.ProcedureConfig(q=1.0, grid="quantile:10")
        res = engine.optimal_cutoff(tensor, config)
        assert res.n_rejected == 12

    def test_infeasible_gives_sentinel(self):
        pairs = np.ones((3, 5, 2))
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(5, bool))
        config = engine.ProcedureConfig(q=1e-9, grid="observed")
        res = engine.optimal_cutoff(tensor, config)
        assert np.isinf(res.t1) and np.isinf(res.t2)
        assert res.n_rejected == 0 and res.fdp_estimate == 0.0

    def test_fwer_q_zero_like(self):
        rng = np.random.default_rng(107)
        tensor = _random_tensor(rng, m=10, b=3)
        config = engine.ProcedureConfig(q=1e-12, grid="observed")
        assert engine.fwer_cutoff(tensor, config).n_rejected == 0


class TestEstimators:
    def test_fbar_hand_example(self):
        pairs = np.array([[[3.0, 3.0]], [[1.0, 1.0]]])
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(1, bool))
        assert engine.fbar(tensor, 0, 2.5, 2.5) == 0.5
        assert engine.fbar(tensor, 0, 0.0, 0.0) == 1.0
        assert engine.fbar(tensor, 0, 100.0, 0.0) == 0.0

    def test_fdp_tilde_hand_example(self):
        pairs = np.array(
            [[[3.0, 3.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 1.0]]]
        )
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(2, bool))
        np.testing.assert_allclose(engine.fdp_tilde(tensor, 2.5, 2.5), 0.5)
        np.testing.assert_allclose(engine.fdp_tilde(tensor, 0.0, 0.0), 1.0)
        assert engine.fdp_tilde(tensor, 100.0, 100.0) == 0.0

    def test_storey_hand_example(self):
        tm = np.ones((2, 3))
        tc = np.array([[0.1, 0.2, 5.0], [0.5, 0.3, 0.4]])
        pairs = np.stack([tm, tc], axis=-1)
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(3, bool))
        np.testing.assert_allclose(engine.storey_pi0(tensor, 1.0), 0.8)

    def test_storey_lambda_above_everything(self):
        rng = np.random.default_rng(110)
        tensor = _random_tensor(rng, m=10, b=5)
        assert engine.storey_pi0(tensor, 1e9) == 1.0

    def test_storey_empty_numerator_warns_one(self):
        pairs = np.ones((3, 4, 2))
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(4, bool))
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            out = engine.storey_pi0(tensor, 0.0)
        assert out == 1.0
        assert len(rec) == 1

    def test_pi0_in_unit_interval(self):
        rng = np.random.default_rng(111)
        for _ in range(20):
            tensor = _random_tensor(rng, style="smooth")
            lam = float(rng.uniform(0.1, 3.0))
            pi0 = engine.storey_pi0(tensor, lam)
            assert 0.0 < pi0 <= 1.0


class TestGrids:
    def test_quantile_grid_shape_and_zero(self):
        rng = np.random.default_rng(120)
        tensor = _random_tensor(rng, style="smooth")
        grid = engine.make_grid(tensor, "quantile:12")
        for axis in (grid.t1_values, grid.t2_values):
            assert axis[0] == 0.0
            assert np.all(np.diff(axis) > 0)
            assert axis.size <= 13

    def test_observed_grid_has_every_value(self):
        rng = np.random.default_rng(121)
        tensor = _random_tensor(rng, m=6, b=2)
        grid = engine.make_grid(tensor, "observed")
        want1 = np.unique(np.concatenate([[0.0], tensor.pairs[:, :, 0].ravel()]))
        np.testing.assert_array_equal(grid.t1_values, want1)

    def test_bad_spec_rejected(self):
        rng = np.random.default_rng(122)
        tensor = _random_tensor(rng)
        with pytest.raises(ValueError, match="grid"):
            engine.make_grid(tensor, "hexagonal")
        with pytest.raises(ValueError, match="grid"):
            engine.make_grid(tensor, "quantile:0")


class TestPaths:
    def test_default_path_monotone(self):
        rng = np.random.default_rng(130)
        for _ in range(10):
            tensor = _random_tensor(rng)
            path = engine.default_path(tensor, int(rng.integers(1, 40)))
            assert np.all(np.diff(path.t1) >= 0)
            assert np.all(np.diff(path.t2) >= 0)

    def test_single_step_is_max_pair(self):
        rng = np.random.default_rng(131)
        tensor = _random_tensor(rng)
        path = engine.default_path(tensor, 1)
        assert path.t1[0] == tensor.pairs[:, :, 0].max()
        assert path.t2[0] == tensor.pairs[:, :, 1].max()

    def test_full_length_visits_every_distinct_value(self):
        rng = np.random.default_rng(132)
        tensor = _random_tensor(rng, m=8, b=3)
        d1 = np.unique(tensor.pairs[:, :, 0])
        d2 = np.unique(tensor.pairs[:, :, 1])
        path = engine.default_path(tensor, int(max(d1.size, d2.size)))
        assert set(np.unique(path.t1)) == set(d1)
        assert set(np.unique(path.t2)) == set(d2)

    def test_nonmonotone_path_rejected(self):
        with pytest.raises(ValueError, match="monotone"):
            engine.MonotonePath(t1=np.array([1.0, 0.5]), t2=np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="empty"):
            engine.MonotonePath(t1=np.zeros(0), t2=np.zeros(0))


class TestSequentialProcedures:
    def test_loosest_point_alone_rejects_nothing(self):
        rng = np.random.default_rng(140)
        tensor = _random_tensor(rng, m=10, b=4)
        path = engine.MonotonePath(t1=np.zeros(1), t2=np.zeros(1))
        res = engine.exchangeable_path(tensor, path, q=0.5)
        assert res.n_rejected == 0 and np.isinf(res.t1)

    def test_identical_points_idempotent(self):
        rng = np.random.default_rng(141)
        tensor = _random_tensor(rng, m=12, b=5)
        one = engine.MonotonePath(t1=np.array([1.0]), t2=np.array([1.5]))
        many = engine.MonotonePath(t1=np.ones(7), t2=np.full(7, 1.5))
        a = engine.exchangeable_path(tensor, one, q=0.4)
        b = engine.exchangeable_path(tensor, many, q=0.4)
        assert a.t1 == b.t1 and a.t2 == b.t2
        np.testing.assert_array_equal(a.rejected, b.rejected)

    def test_walk_stops_at_first_feasible(self):
        rng = np.random.default_rng(142)
        for _ in range(10):
            tensor = _random_tensor(rng)
            path = engine.default_path(tensor, 15)
            q = 0.3
            res = engine.exchangeable_path(tensor, path, q)
            crits = [
                engine.fdp_tilde(tensor, t1, t2) for t1, t2 in zip(path.t1, path.t2)
            ]
            feas = [c <= q for c in crits]
            if not any(feas):
                assert res.n_rejected == 0 and np.isinf(res.t1)
            else:
                s = feas.index(True)
                assert res.t1 == path.t1[s] and res.t2 == path.t2[s]

    def test_ordered_grid_first_point_feasible(self):
        pairs = np.zeros((2, 4, 2))
        pairs[0] = [[5.0, 5.0], [4.0, 4.0], [3.0, 3.0], [0.1, 0.1]]
        pairs[1] = [[0.2, 0.2], [0.1, 0.3], [0.2, 0.1], [0.1, 0.2]]
        tensor = core.StatTensor(pairs=pairs, zero_variance=np.zeros(4, bool))
        path = engine.MonotonePath(t1=np.array([1.0, 2.0]), t2=np.array([1.0, 2.0]))
        res = engine.ordered_grid_procedure(tensor, path, q=0.5)
        assert res.t1 == 1.0 and res.t2 == 1.0
        assert res.n_rejected == 3

    def test_ordered_grid_agrees_with_search_feasibility(self):
        rng = np.random.default_rng(143)
        for _ in range(10):
            tensor = _random_tensor(rng)
            path = engine.default_path(tensor, 12)
            q = 0.25
            res = engine.ordered_grid_procedure(tensor, path, q)
            found = None
            for t1, t2 in zip(path.t1, path.t2):
                if engine.fdp_tilde(tensor, t1, t2) <= q:
                    found = (t1, t2)
                    break
            if found is None:
                assert res.n_rejected == 0
            else:
                assert (res.t1, res.t2) == found


class TestBH:
    def test_textbook_example(self):
        rej = engine.bh_procedure(np.array([0.01, 0.02, 0.5]), q=0.05)
        np.testing.assert_array_equal(rej, [0, 1])

    def test_all_ones_empty(self):
        assert engine.bh_procedure(np.ones(10), q=0.05).size == 0

    def test_boundary_inclusive(self):
        np.testing.assert_array_equal(engine.bh_procedure(np.array([0.05]), 0.05), [0])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="p-values"):
            engine.bh_procedure(np.array([0.5, 1.2]), 0.05)

    def test_step_up_dominates_bonferroni(self):
        rng = np.random.default_rng(150)
        for _ in range(20):
            p = rng.random(30)
            q = 0.2
            bh = set(engine.bh_procedure(p, q).tolist())
            bonf = {int(i) for i in np.nonzero(p <= q / p.size)[0]}
            assert bonf <= bh


def _tensor_dataset(seed=0, n=60, m=8):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 2))
    x = 0.6 * z[:, :1] + rng.normal(size=(n, 1))
    beta = np.zeros(m)
    beta[: m // 2] = 0.8
    y = x * beta + 0.5 * z[:, :1] + rng.normal(size=(n, m))
    return core.Dataset(x=x, y=y, z=z)


class TestBuildTensor:
    def test_shapes_and_metadata(self):
        ds = _tensor_dataset()
        plan = engine.ResamplePlan(strategy="residual-perm", b_count=7, seed=11)
        spec = engine.StatisticSpec(kind="glm", family="gaussian")
        tensor = engine.build_tensor(ds, plan, spec)
        assert tensor.pairs.shape == (8, ds.m, 2)
        assert tensor.b == 7 and tensor.m == ds.m
        assert tensor.statistic == "glm:gaussian"
        assert tensor.sampler == "residual-perm"
        assert np.all(np.isfinite(tensor.pairs))

    def test_deterministic_in_seed(self):
        ds = _tensor_dataset(3)
        spec = engine.StatisticSpec(kind="glm", family="gaussian")
        t1 = engine.build_tensor(
            ds, engine.ResamplePlan("residual-perm", 5, seed=42), spec
        )
        t2 = engine.build_tensor(
            ds, engine.ResamplePlan("residual-perm", 5, seed=42), spec
        )
        t3 = engine.build_tensor(
            ds, engine.ResamplePlan("residual-perm", 5, seed=43), spec
        )
        np.testing.assert_array_equal(t1.pairs, t2.pairs)
        assert not np.array_equal(t1.pairs, t3.pairs)

    def test_identity_draw_duplicates_observed_row(self, monkeypatch):
        # If the sampler returns x unchanged, every row must equal row 0.
        ds = _tensor_dataset(5)
        monkeypatch.setattr(
            engine.samplers,
            "draw_for_strategy",
            lambda strategy, model, rng: model.fitted_mean + model.residuals,
        )
        plan = engine.ResamplePlan("residual-perm", 3, seed=1)
        tensor = engine.build_tensor(
            ds, plan, engine.StatisticSpec(kind="glm", family="gaussian")
        )
        for row in range(1, 4):
            np.testing.assert_array_equal(tensor.pairs[row], tensor.pairs[0])

    def test_zero_variance_rows_zeroed_and_flagged(self):
        ds = _tensor_dataset(7)
        ds.y[:, 2] = 4.25
        plan = engine.ResamplePlan("residual-perm", 4, seed=9)
        tensor = engine.build_tensor(
            ds, plan, engine.StatisticSpec(kind="glm", family="gaussian")
        )
        assert tensor.zero_variance[2]
        assert tensor.zero_variance.sum() == 1
        np.testing.assert_array_equal(tensor.pairs[:, 2, :], 0.0)

    def test_incompatible_sampler_rejected(self):
        ds = _tensor_dataset()
        plan = engine.ResamplePlan("parametric-logistic", 3, seed=0)
        with pytest.raises(ValueError, match="binary exposure"):
            engine.build_tensor(
                ds, plan, engine.StatisticSpec(kind="glm", family="gaussian")
            )

    def test_family_outcome_mismatch_rejected(self):
        ds = _tensor_dataset()
        plan = engine.ResamplePlan("residual-perm", 3, seed=0)
        with pytest.raises(ValueError, match="outcomes"):
            engine.build_tensor(
                ds, plan, engine.StatisticSpec(kind="glm", family="poisson")
            )

    def test_invalid_dataset_rejected(self):
        ds = _tensor_dataset()
        ds.y[0, 0] = np.nan
        plan = engine.ResamplePlan("residual-perm", 3, seed=0)
        with pytest.raises(ValueError, match="invalid dataset"):
            engine.build_tensor(
                ds, plan, engine.StatisticSpec(kind="glm", family="gaussian")
            )


class TestConfigValidation:
    def test_spec_token_round_trip(self):
        spec = engine.StatisticSpec.from_token("glm:poisson")
        assert spec.kind == "glm" and spec.family == "poisson"
        assert spec.token == "glm:poisson"
        assert engine.StatisticSpec.from_token("hsic").token == "hsic"

    def test_bare_glm_rejected(self):
        with pytest.raises(ValueError, match="family"):
            engine.StatisticSpec.from_token("glm")

    def test_plan_validation(self):
        with pytest.raises(ValueError, match="strategy"):
            engine.ResamplePlan("teleport", 3, seed=0)
        with pytest.raises(ValueError, match="b_count"):
            engine.ResamplePlan("residual-perm", 0, seed=0)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="q must"):
            engine.ProcedureConfig(q=0.0)
        with pytest.raises(ValueError, match="q must"):
            engine.ProcedureConfig(q=1.5)
        with pytest.raises(ValueError, match="method"):
            engine.ProcedureConfig(method="triple-dip")
        with pytest.raises(ValueError, match="pi0_lambda"):
            engine.ProcedureConfig(pi0_lambda=-2.0)
        engine.ProcedureConfig(q=1.0, pi0_lambda="auto")

    def test_apply_method_dispatch(self):
        rng = np.random.default_rng(7)
        tensor = _random_tensor(rng, m=10, b=16)
        for method in ("mf2d-fdr", "mf2d-fwer", "mf1d", "exchangeable-path", "ordered-grid"):
            cfg = engine.ProcedureConfig(q=0.3, method=method, path_steps=20)
            res = engine.apply_method(tensor, cfg)
            assert isinstance(res, core.CutoffResult)
        with pytest.raises(ValueError, match="tensor"):
            engine.apply_method(tensor, engine.ProcedureConfig(method="bh"))
