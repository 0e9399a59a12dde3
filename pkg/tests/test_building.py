import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcnode import building as bm
from pcnode.building import Adjacency, BuildingInputs, BuildingModel, BuildingParams
from pcnode.core import check_energy_conservation, check_monotonicity, energy_power_scale

from oracles import building_entropy_production, building_sdot

temps = arrays(np.float64, 3, elements=st.floats(260.0, 320.0))
positive = st.floats(1e-3, 10.0)


def params_for(adj, lam_edge, lam_ext, b=(1e-3,), **kw):
    N = adj.n_zones
    b = np.broadcast_to(np.asarray(b, dtype=float), (N,))
    return BuildingParams.from_effective(adj, lam_edge, lam_ext, b, b, b, **kw)


def two_zone(lam=1.0):
    return params_for(Adjacency(2, ((0, 1),)), [lam], [0.5, 0.5])


def random_params(rng, n_zones=3, edges=None):
    adj = Adjacency.chain(n_zones) if edges is None else Adjacency(n_zones, edges)
    return BuildingParams.from_effective(
        adj, rng.uniform(0.01, 10, adj.n_edges), rng.uniform(0.01, 10, n_zones),
        rng.uniform(1e-4, 1e-2, n_zones), rng.uniform(1e-4, 1e-2, n_zones), rng.uniform(1e-4, 1e-2, n_zones),
        zone_heat_capacity=rng.uniform(1e5, 1e7, n_zones))


class TestAdjacency:
    @pytest.mark.parametrize("edges", [((0, 0),), ((0, 1), (1, 0)), ((0, 3),)])
    def test_invalid_edges(self, edges):
        with pytest.raises(ValueError):
            Adjacency(3, edges)

    def test_edges_normalized(self):
        assert Adjacency(3, ((2, 1),)).edges == ((1, 2),)

    def test_incidence_selects_edge_ends(self):
        first, second = Adjacency.chain(3).incidence()
        np.testing.assert_array_equal(first @ np.array([10.0, 20, 30]), [10, 20])
        np.testing.assert_array_equal(second @ np.array([10.0, 20, 30]), [20, 30])


class TestTemperatureEntropy:
    def test_reference_point(self):
        p = two_zone()
        np.testing.assert_allclose(bm.temperature_from_entropy(p, p.s_ref), p.t_ref)

    def test_ln2_doubles_temperature(self):
        p = two_zone()
        T = bm.temperature_from_entropy(p, p.s_ref + p.zone_heat_capacity * np.log(2.0))
        np.testing.assert_allclose(T, 2 * p.t_ref, rtol=1e-15)

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        p = random_params(rng)
        T = rng.uniform(260, 320, size=(1000, 3))
        back = bm.temperature_from_entropy(p, bm.entropy_from_temperature(p, T))
        np.testing.assert_allclose(back, T, rtol=1e-12)

    def test_overflow_names_zone(self):
        p = two_zone()
        S = np.array([0.0, 800.0 * p.zone_heat_capacity[1]])
        with pytest.raises(bm.TemperatureRangeError, match="zone 1"):
            bm.temperature_from_entropy(p, S)

    def test_nonpositive_temperature(self):
        with pytest.raises(bm.TemperatureRangeError):
            bm.entropy_from_temperature(two_zone(), np.array([290.0, 0.0]))


class TestJtilde:
    def test_equal_temperatures_give_zero(self):
        p = random_params(np.random.default_rng(1))
        M = bm.build_jtilde(p, np.full(3, 295.0)).materialize()
        assert np.all(M == 0.0)

    def test_two_zone_entry(self):
        M = bm.build_jtilde(two_zone(), np.array([300.0, 290.0])).materialize()
        assert M[0, 1] == pytest.approx(-10.0 / 87000.0, rel=1e-14)
        assert M[1, 0] == -M[0, 1]

    def test_non_adjacent_entry_is_zero(self):
        p = random_params(np.random.default_rng(2))
        M = bm.build_jtilde(p, np.array([280.0, 300.0, 310.0])).materialize()
        assert M[0, 2] == 0.0 and M[2, 0] == 0.0

    @settings(max_examples=200, deadline=None)
    @given(temps, st.integers(0, 2**31 - 1))
    def test_decomposition_sums_to_jtilde(self, T, seed):
        p = random_params(np.random.default_rng(seed))
        terms = bm.decompose_jtilde(p, T)
        total = sum(r * J.materialize() for r, J in terms)
        np.testing.assert_allclose(total, bm.build_jtilde(p, T).materialize(), rtol=0, atol=1e-14)
        for (r, J), (i, j), lam in zip(terms, p.adjacency.edges, p.lambda_edge):
            assert sorted(J.materialize().ravel().tolist()).count(1.0) == 1
            # R_k * T' J_k-ish entropy term equals lam (Tj - Ti)^2 / (Ti Tj)
            s_term = r * (J.materialize() @ T).sum()
            assert s_term == pytest.approx(lam * (T[j] - T[i]) ** 2 / (T[i] * T[j]), rel=1e-10, abs=1e-18)
            assert s_term >= 0

    def test_single_edge_one_term(self):
        p = two_zone()
        T = np.array([300.0, 290.0])
        (r, J), = bm.decompose_jtilde(p, T)
        np.testing.assert_array_equal(r * J.materialize(), bm.build_jtilde(p, T).materialize())


class TestBuildingRhs:
    def test_all_drivers_zero(self):
        p = random_params(np.random.default_rng(3))
        S = bm.entropy_from_temperature(p, np.full(3, 291.0))
        u = BuildingInputs.constant(3, T_e=291.0)
        np.testing.assert_allclose(bm.building_rhs(p, S, u), 0.0, atol=1e-18)

    def test_two_zone_isolated(self):
        model = BuildingModel(two_zone())
        S = model.encode(np.array([300.0, 290.0]))
        rate = model.conservative_rhs(S)
        np.testing.assert_allclose(rate, [-1 / 30, 10 / 290], rtol=1e-12)
        assert model.entropy_rate(S) == pytest.approx(10 * (1 / 290 - 1 / 300), rel=1e-12)
        assert model.entropy_rate(S) == pytest.approx(1.1494e-3, rel=1e-4)
        terms = bm.decompose_jtilde(model.params, np.array([300.0, 290.0]))
        assert sum(r * (J.materialize() @ [300.0, 290.0]).sum() for r, J in terms) == pytest.approx(
            model.entropy_rate(S), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(temps, st.floats(250.0, 310.0), arrays(np.float64, 9, elements=st.floats(-100.0, 100.0)),
           st.integers(0, 2**31 - 1))
    def test_matches_heat_flow_oracle(self, T, T_e, gains, seed):
        p = random_params(np.random.default_rng(seed))
        u = np.concatenate([[T_e], gains])
        S = bm.entropy_from_temperature(p, T)
        ref = building_sdot(p.adjacency.edges, p.lambda_edge, p.lambda_ext, p.b_s, p.b_h, p.b_c,
                            bm.temperature_from_entropy(p, S), u)
        np.testing.assert_allclose(bm.building_rhs(p, S, u), ref, rtol=1e-10, atol=1e-14)

    def test_heating_zone_only_affects_that_zone(self):
        p = random_params(np.random.default_rng(4))
        S = bm.entropy_from_temperature(p, np.array([290.0, 295.0, 288.0]))
        lo = BuildingInputs.constant(3, 280.0).to_vector()
        hi = lo.copy()
        hi[1 + 3 + 1] += 50.0  # Q_h of zone 1
        d = bm.building_rhs(p, S, hi) - bm.building_rhs(p, S, lo)
        assert d[1] > 0 and d[0] == 0 and d[2] == 0

    def test_inputs_object_and_vector_agree(self):
        p = random_params(np.random.default_rng(5))
        u = BuildingInputs(285.0, np.array([1.0, 2, 3]), np.array([4.0, 5, 6]), np.array([-1.0, -2, -3]))
        S = np.zeros(3)
        np.testing.assert_array_equal(bm.building_rhs(p, S, u), bm.building_rhs(p, S, u.to_vector()))
        back = BuildingInputs.from_vector(u.to_vector(), 3)
        np.testing.assert_array_equal(back.Q_h, u.Q_h)

    def test_rejects_nonpositive_ambient(self):
        p = two_zone()
        with pytest.raises(bm.TemperatureRangeError):
            bm.building_rhs(p, np.zeros(2), np.zeros(7))


class TestPhysicsLaws:
    def test_first_law_random_draws(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            edges = tuple((i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.6) or ((0, 1),)
            model = BuildingModel(random_params(rng, n, edges))
            S = model.encode(rng.uniform(260, 320, n))
            res = check_energy_conservation(model, S)
            assert res <= 1e-10 * max(energy_power_scale(model, S), 1e-300)

    def test_second_law_random_draws(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            p = random_params(rng)
            model = BuildingModel(p)
            T = rng.uniform(260, 320, 3)
            rate = model.entropy_rate(model.encode(T))
            assert rate >= -1e-12
            ref = building_entropy_production(p.adjacency.edges, p.lambda_edge, model.temperatures(model.encode(T)))
            assert rate == pytest.approx(ref, rel=1e-8, abs=1e-15)

    def test_monotonicity_random_inputs(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            model = BuildingModel(random_params(rng))
            S = model.encode(rng.uniform(260, 320, 3))
            lo = np.concatenate([[rng.uniform(250, 300)], rng.normal(0, 50, 9)])
            hi = lo + rng.exponential(10.0, 10)
            assert check_monotonicity(model, S, lo, hi)

    def test_negated_heating_gain_breaks_monotonicity(self):
        p = random_params(np.random.default_rng(10))
        # test-only bypass of the softplus constraint
        p.__dict__["b_h"] = -np.asarray(p.b_h)
        model = BuildingModel(p)
        rng = np.random.default_rng(0)
        found = False
        for _ in range(100):
            S = model.encode(rng.uniform(260, 320, 3))
            lo = np.concatenate([[290.0], np.zeros(9)])
            hi = lo.copy()
            hi[4:7] += 10.0
            if not check_monotonicity(model, S, lo, hi):
                found = True
                break
        assert found


class TestParams:
    def test_initial_guess_effective_values(self):
        eff = BuildingParams.initial_guess(Adjacency.chain(3)).effective()
        np.testing.assert_allclose(eff["lambda_edge"], 1.0)
        np.testing.assert_allclose(eff["lambda_ext"], 0.5)
        for g in ("b_s", "b_h", "b_c"):
            np.testing.assert_allclose(eff[g], 1e-3)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 14, elements=st.floats(-30.0, 30.0)))
    def test_any_raw_vector_gives_positive_coefficients(self, raw):
        model = BuildingModel(BuildingParams.initial_guess(Adjacency.chain(3))).with_parameters(raw)
        for v in model.effective_parameters().values():
            assert np.all(v > 0)

    def test_nonpositive_heat_capacity_rejected(self):
        with pytest.raises(ValueError):
            params_for(Adjacency.chain(2), [1.0], [1.0, 1.0], zone_heat_capacity=0.0)

    def test_config_roundtrip(self):
        model = BuildingModel(random_params(np.random.default_rng(12)))
        values = model.parameters().values
        again = BuildingModel.from_config(model.to_config(), values)
        np.testing.assert_array_equal(again.parameters().values, values)
        np.testing.assert_array_equal(again.params.zone_heat_capacity, model.params.zone_heat_capacity)

    def test_hamiltonian_gradient_is_temperature(self):
        model = BuildingModel(random_params(np.random.default_rng(13)))
        from pcnode.autodiff import finite_diff_gradient

        S = model.encode(np.array([280.0, 300.0, 310.0]))
        fd = finite_diff_gradient(lambda s: float(model.hamiltonian(s)), S, eps=10.0)
        np.testing.assert_allclose(fd, model.hamiltonian_grad(S), rtol=1e-7)


class TestSynthetic:
    def test_isolated_equilibrium_is_constant(self):
        p = random_params(np.random.default_rng(14))
        u = np.tile(BuildingInputs.constant(3, 290.0).to_vector(), (20, 1))
        traj = bm.synth_building_generate(p, u, np.full(3, 290.0))
        np.testing.assert_allclose(traj.states, 290.0, rtol=1e-13)

    def test_heating_one_zone_never_cools_any_zone(self):
        p = random_params(np.random.default_rng(15))
        u = np.tile(BuildingInputs.constant(3, 290.0).to_vector(), (200, 1))
        u[:, 1 + 3] = 200.0
        traj = bm.synth_building_generate(p, u, np.full(3, 290.0))
        assert np.all(np.diff(traj.states, axis=0) >= 0)
        assert traj.states[-1, 0] > 290.0

    def test_energy_residual_along_emitted_states(self):
        p = bm.default_true_params(3)
        u = bm.synthetic_inputs(3, 300, 900.0, np.random.default_rng(0))
        traj = bm.synth_building_generate(p, u, np.full(3, 293.0))
        model = BuildingModel(p)
        S = model.encode(traj.states)
        assert check_energy_conservation(model, S) <= 1e-10 * energy_power_scale(model, S)
        assert traj.metadata["substeps"] == 10 and traj.h == 900.0

    def test_divergence_reports_step(self):
        p = random_params(np.random.default_rng(16))
        u = np.tile(BuildingInputs.constant(3, 290.0).to_vector(), (5, 1))
        u[2, 4] = 1e12
        with pytest.raises(bm.ModelError, match="step 2"):
            bm.synth_building_generate(p, u, np.full(3, 290.0))

    def test_labels(self):
        assert bm.state_labels(2) == ["T_zone1[K]", "T_zone2[K]"]
        assert bm.input_labels(1) == ["T_e[K]", "Q_s1[W]", "Q_h1[W]", "Q_c1[W]"]
