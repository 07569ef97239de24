import numpy as np
import pytest

from popnets.data import GenerationRegime, IndividualData, TimeCourse, generate_population
from popnets.graphs import enumerate_parent_space
from popnets.likelihood import (
    NumericalDegeneracyError,
    PhiPolicy,
    RegressionView,
    build_regression_view,
    build_score_table,
    dump_score_table_csv,
    load_score_table,
    log_marginal_likelihood,
    save_score_table,
    select_phi,
)
from popnets.oracle import dense_marginal_likelihood


def _regime(**overrides):
    base = dict(
        J=2, n=8, E=2, P=4, sigma=0.3, rho=1.2, h_eta=0.8, h_lambda=0.9,
        interventions=True, seed=11,
    )
    base.update(overrides)
    return GenerationRegime(**base)


@pytest.fixture(scope="module")
def small_data():
    return generate_population(_regime())


def _course(values, target=None):
    return TimeCourse(values=np.asarray(values, dtype=float), intervention_target=target)


class TestRegressionView:
    def test_empty_parents(self):
        ind = IndividualData("a", (_course(np.arange(8.0).reshape(4, 2)),))
        view = build_regression_view(ind, 1, ())
        assert view.b == 0
        assert view.a == 2

    def test_initial_rows_zeroed(self):
        values = [[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]
        ind = IndividualData("a", (_course(values),))
        view = build_regression_view(ind, 2, (1,))
        assert np.array_equal(view.model_design[:, 0], [0.0, 1.0, 2.0])
        assert np.array_equal(view.common_design[:, 0], [1.0, 0.0, 0.0])
        assert np.array_equal(view.common_design[:, 1], [0.0, 1.0, 1.0])
        assert np.array_equal(view.response, [10.0, 20.0, 30.0])

    def test_intervened_predictor_column_zeroed(self):
        values = np.arange(12.0).reshape(4, 3)
        ind = IndividualData("a", (_course(values, target=2),))
        view = build_regression_view(ind, 3, (2,))
        assert np.all(view.model_design == 0.0)

    def test_fixed_effect_column_when_target_is_response(self):
        values = np.arange(12.0).reshape(4, 3)
        plain = IndividualData("a", (_course(values),))
        hit = IndividualData("a", (_course(values, target=2),))
        assert build_regression_view(plain, 2, ()).a == 2
        view = build_regression_view(hit, 2, ())
        assert view.a == 3
        assert np.array_equal(view.common_design[:, 2], [0.0, 1.0, 1.0, 1.0])

    def test_fixed_effect_only_on_matching_course(self):
        values = np.arange(12.0).reshape(4, 3)
        ind = IndividualData("a", (_course(values, target=1), _course(values, target=2)))
        view = build_regression_view(ind, 1, ())
        assert view.a == 3
        fe = view.common_design[:, 2]
        assert np.array_equal(fe, [0, 1, 1, 1, 0, 0, 0, 0])

    def test_out_of_range_parents(self):
        ind = IndividualData("a", (_course(np.zeros((3, 2))),))
        with pytest.raises(ValueError):
            build_regression_view(ind, 1, (3,))


class TestMarginalLikelihood:
    def test_empty_parent_set_closed_form(self, small_data):
        data, _ = small_data
        view = build_regression_view(data.individuals[0], 1, ())
        y = view.response
        X0 = view.common_design
        # direct projection arithmetic for the no-parent model
        P0 = X0 @ np.linalg.inv(X0.T @ X0) @ X0.T
        q = float(y @ (np.eye(len(y)) - P0) @ y)
        expected = -0.5 * (len(y) - X0.shape[1]) * np.log(q)
        assert log_marginal_likelihood(view, 1.0) == pytest.approx(expected, abs=1e-10)
        # and phi is irrelevant without a model part
        assert log_marginal_likelihood(view, 1.0) == pytest.approx(
            log_marginal_likelihood(view, 100.0), abs=1e-12
        )

    def test_matches_dense_oracle(self):
        data, _ = generate_population(_regime(J=1, P=2, n=6, E=1, seed=3))
        ind = data.individuals[0]
        for target in (1, 2):
            for parents in ((), (1,), (2,), (1, 2)):
                view = build_regression_view(ind, target, parents)
                assert log_marginal_likelihood(view, 1.0) == pytest.approx(
                    dense_marginal_likelihood(view, 1.0), abs=1e-10
                )

    def test_response_scaling_shifts_by_constant(self, small_data):
        data, _ = small_data
        ind = data.individuals[0]
        view = build_regression_view(ind, 2, (1, 3))
        k = 7.5
        scaled = RegressionView(view.response * k, view.common_design, view.model_design * 1.0)
        n = view.num_rows
        a = np.linalg.matrix_rank(view.common_design)
        for phi in (0.5, 2.0):
            shift = log_marginal_likelihood(scaled, phi) - log_marginal_likelihood(view, phi)
            assert shift == pytest.approx(-(n - a) * np.log(k), abs=1e-9)

    def test_duplicated_column_is_rank_aware(self, small_data):
        data, _ = small_data
        view = build_regression_view(data.individuals[0], 3, (1,))
        doubled = RegressionView(
            view.response,
            view.common_design,
            np.column_stack([view.model_design, view.model_design]),
        )
        assert log_marginal_likelihood(doubled, 2.0) == pytest.approx(
            log_marginal_likelihood(view, 2.0), abs=1e-12
        )

    def test_projection_contracts(self, small_data):
        data, _ = small_data
        view = build_regression_view(data.individuals[1], 2, (1, 4))
        X0, Xg = view.common_design, view.model_design
        P0 = X0 @ np.linalg.pinv(X0.T @ X0) @ X0.T
        Xt = (np.eye(len(view.response)) - P0) @ Xg
        Pg = Xt @ np.linalg.pinv(Xt.T @ Xt) @ Xt.T
        for proj in (P0, Pg):
            assert np.max(np.abs(proj - proj.T)) < 1e-10
            assert np.max(np.abs(proj @ proj - proj)) < 1e-10
        assert np.max(np.abs(P0 @ Xt)) < 1e-10

    def test_degenerate_residual_raises(self):
        # an identically-zero response leaves an exactly-zero quadratic form
        values = np.ones((4, 2))
        values[0, 0] = 5.0
        values[2, 0] = 3.0
        values[:, 1] = 0.0
        ind = IndividualData("a", (_course(values),))
        view = build_regression_view(ind, 2, ())
        with pytest.raises(NumericalDegeneracyError):
            log_marginal_likelihood(view, 1.0)

    def test_too_few_rows(self):
        ind = IndividualData("a", (_course(np.random.default_rng(0).normal(size=(2, 2))),))
        view = build_regression_view(ind, 1, (2,))
        with pytest.raises(ValueError, match="n > a"):
            log_marginal_likelihood(view, 1.0)

    def test_invalid_phi(self, small_data):
        data, _ = small_data
        view = build_regression_view(data.individuals[0], 1, ())
        with pytest.raises(ValueError):
            log_marginal_likelihood(view, 0.0)


class TestSelectPhi:
    def test_orthogonal_parents_fall_back_to_minimum(self):
        rng = np.random.default_rng(4)
        n = 12
        y = rng.normal(size=n)
        X0 = np.column_stack([np.eye(n)[:, 0], np.ones(n) - np.eye(n)[:, 0]])
        # predictor orthogonal to the response's residual: R = 0
        resid = y - X0 @ np.linalg.lstsq(X0, y, rcond=None)[0]
        basis = np.linalg.qr(rng.normal(size=(n, n)))[0]
        ortho = basis - np.outer(resid, resid @ basis) / (resid @ resid)
        ortho = ortho - X0 @ np.linalg.lstsq(X0, ortho, rcond=None)[0]
        view = RegressionView(y, X0, ortho[:, 2:3])
        policy = PhiPolicy()
        assert select_phi(view, policy) == policy.phi_min

    def test_fixed_policy(self, small_data):
        data, _ = small_data
        view = build_regression_view(data.individuals[0], 1, (2,))
        assert select_phi(view, PhiPolicy(mode="fixed", fixed_value=1.0)) == 1.0

    def test_matches_grid_search(self, small_data):
        data, _ = small_data
        grid = np.logspace(-6, 6, 10001)
        step = 12 / 10000
        for j, target, parents in [(0, 1, (2, 3)), (0, 4, (1,)), (1, 3, (2, 4))]:
            view = build_regression_view(data.individuals[j], target, parents)
            phi = select_phi(view, PhiPolicy())
            values = [log_marginal_likelihood(view, g) for g in grid]
            best = grid[int(np.argmax(values))]
            assert abs(np.log10(phi) - np.log10(best)) <= step


class TestScoreTable:
    def test_shape_j1_p2_c1(self):
        data, _ = generate_population(_regime(J=1, P=2, n=6, E=1, seed=3))
        space = enumerate_parent_space(2, 1)
        table = build_score_table(data, space)
        assert table.log_scores.shape == (1, 2, 3)
        assert np.all(np.isfinite(table.log_scores))

    def test_course_order_exchangeable(self):
        data, _ = generate_population(_regime(E=3, seed=29))
        space = enumerate_parent_space(4, 2)
        table = build_score_table(data, space)
        flipped = type(data)(
            individuals=tuple(
                IndividualData(ind.individual_id, tuple(reversed(ind.courses)))
                for ind in data.individuals
            ),
            variable_names=data.variable_names,
        )
        table_flipped = build_score_table(flipped, space)
        np.testing.assert_allclose(
            table.log_scores, table_flipped.log_scores, rtol=0, atol=1e-10
        )

    def test_matches_dense_oracle_cellwise(self, small_data):
        data, _ = small_data
        space = enumerate_parent_space(4, 2)
        policy = PhiPolicy()
        table = build_score_table(data, space, policy)
        for j, ind in enumerate(data.individuals):
            for p in range(1, 5):
                for s, members in enumerate(space.member_tuples):
                    view = build_regression_view(ind, p, members)
                    phi = select_phi(view, policy)
                    assert table.log_scores[j, p - 1, s] == pytest.approx(
                        dense_marginal_likelihood(view, phi), abs=1e-10
                    )

    def test_parallel_build_identical(self, small_data):
        data, _ = small_data
        space = enumerate_parent_space(4, 2)
        serial = build_score_table(data, space)
        parallel = build_score_table(data, space, workers=2)
        assert np.array_equal(serial.log_scores, parallel.log_scores)

    def test_modularity_over_full_assignment(self, small_data):
        # the joint log likelihood of a full network assignment is the sum of
        # per-(individual, target) table entries
        data, _ = small_data
        space = enumerate_parent_space(4, 2)
        policy = PhiPolicy(mode="fixed", fixed_value=2.0)
        table = build_score_table(data, space, policy)
        rng = np.random.default_rng(0)
        assignment = {
            (j, p): int(rng.integers(space.size))
            for j in range(2)
            for p in range(1, 5)
        }
        total_from_table = sum(
            table.log_scores[j, p - 1, s] for (j, p), s in assignment.items()
        )
        total_direct = sum(
            dense_marginal_likelihood(
                build_regression_view(
                    data.individuals[j], p, space.member_tuples[s]
                ),
                2.0,
            )
            for (j, p), s in assignment.items()
        )
        assert total_from_table == pytest.approx(total_direct, abs=1e-9)

    def test_true_parents_win_at_low_noise(self):
        data, truth = generate_population(
            _regime(sigma=1e-8, interventions=False, n=10, E=2, seed=13)
        )
        space = enumerate_parent_space(4, 2)
        table = build_score_table(data, space)
        by_card = {}
        for s, members in enumerate(space.member_tuples):
            by_card.setdefault(len(members), []).append(s)
        for j, net in enumerate(truth.individuals):
            for p in range(4):
                true_members = tuple(
                    v for v in range(1, 5) if net.adjacency()[v - 1, p]
                )
                if len(true_members) > 2:
                    continue
                s_true = space.member_tuples.index(true_members)
                rivals = [s for s in by_card[len(true_members)] if s != s_true]
                if rivals:
                    assert table.log_scores[j, p, s_true] >= max(
                        table.log_scores[j, p, s] for s in rivals
                    )

    def test_binary_cache_roundtrip(self, small_data, tmp_path):
        data, _ = small_data
        space = enumerate_parent_space(4, 2)
        table = build_score_table(data, space)
        path = tmp_path / "scores.bin"
        save_score_table(table, path)
        loaded = load_score_table(path, individual_ids=table.individual_ids)
        assert np.array_equal(loaded.log_scores, table.log_scores)
        assert loaded.space_hash == table.space_hash
        assert loaded.c == table.c

    def test_csv_dump(self, small_data, tmp_path):
        data, _ = small_data
        space = enumerate_parent_space(4, 2)
        table = build_score_table(data, space)
        path = tmp_path / "scores.csv"
        dump_score_table_csv(table, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "individual,target,set_index,log_score"
        assert len(lines) == 1 + table.log_scores.size

    def test_p_mismatch_rejected(self, small_data):
        data, _ = small_data
        with pytest.raises(ValueError):
            build_score_table(data, enumerate_parent_space(5, 2))

    def test_cached_table_drives_identical_inference(self, small_data, tmp_path):
        from popnets.engine import Hyperparameters, run

        data, truth = small_data
        space = enumerate_parent_space(4, 2)
        table = build_score_table(data, space)
        path = tmp_path / "scores.bin"
        save_score_table(table, path)
        loaded = load_score_table(path, individual_ids=table.individual_ids)
        hp = Hyperparameters(eta=1.0, lam=2.0, c=2)
        fresh, _ = run(table, space, hp, truth.prior)
        rerun, _ = run(loaded, space, hp, truth.prior)
        assert np.array_equal(fresh.latent, rerun.latent)
        assert np.array_equal(fresh.individual, rerun.individual)
