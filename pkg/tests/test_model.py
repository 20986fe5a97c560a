"""Decision values, stage vectors, predictions, chains, and accounting."""

import numpy as np
import pytest

import chainrec as cr
from chainrec import (
    FeatureSchema,
    HyperParams,
    ItemFeatures,
    ModelParams,
    ProbabilityChain,
    UserFeatures,
    bayes_from_chain,
    count_params,
    decision_value,
    expand_weights,
    item_map,
    model_objective,
    one_hot_encode,
    predict_cells,
    predict_dataset,
    predict_label,
    stage_vector,
    user_map,
)
from chainrec.train import init_params

from oracles import slow_decision, slow_item_map, slow_user_map
from util import toy_dataset, toy_schema


def categorical_params(a_val=2.0, b_val=3.0, q=((0.5,), (0.25,))):
    sc = FeatureSchema(
        p1=0, p2=0, d1=1, d2=1,
        user_cardinalities=(1,), item_cardinalities=(1,), T=len(q),
    )
    return ModelParams(
        schema=sc, K=1,
        A=np.zeros((1, 0)), B=np.zeros((1, 0)),
        a=(np.array([[a_val]]),), b=(np.array([[b_val]]),),
        q=np.array(q, dtype=np.float64),
    )


def random_params(schema, K, rng):
    return ModelParams(
        schema=schema, K=K,
        A=rng.random((K, schema.p1)), B=rng.random((K, schema.p2)),
        a=tuple(rng.random((c, K)) for c in schema.user_cardinalities),
        b=tuple(rng.random((c, K)) for c in schema.item_cardinalities),
        q=np.abs(rng.normal(0.0, 0.4, size=(schema.T, K))),
    )


# ---------------------------------------------------------------------------
# Stage vectors and decision values


def test_stage_vector_hand_values():
    p = categorical_params()
    np.testing.assert_array_equal(stage_vector(p, 0, 0), [1.0])
    np.testing.assert_array_equal(stage_vector(p, 0, 1), [0.5])
    np.testing.assert_array_equal(stage_vector(p, 0, 2), [0.25])
    np.testing.assert_array_equal(stage_vector(p, 1, 2), [0.75])


def test_decision_value_hand_case():
    p = categorical_params()
    uf = UserFeatures(np.zeros(0), (1,))
    itf = ItemFeatures(np.zeros(0), (1,))
    assert decision_value(p, uf, itf, 0, 1) == 3.0
    assert decision_value(p, uf, itf, 0, 2) == 1.5
    assert decision_value(p, uf, itf, 1, 2) == 4.5


def test_maps_and_decisions_match_loop_oracle():
    rng = np.random.default_rng(8)
    sc = toy_schema(p1=2, p2=1, cards_u=(3, 2), cards_i=(4,), T=3)
    for _ in range(10):
        p = random_params(sc, 3, rng)
        uf = UserFeatures(rng.random(2), (int(rng.integers(1, 4)), int(rng.integers(1, 3))))
        itf = ItemFeatures(rng.random(1), (int(rng.integers(1, 5)),))
        np.testing.assert_allclose(user_map(p, uf), slow_user_map(p, uf), atol=1e-12)
        np.testing.assert_allclose(item_map(p, itf), slow_item_map(p, itf), atol=1e-12)
        for tp in range(3):
            for t in range(tp + 1, 4):
                np.testing.assert_allclose(
                    decision_value(p, uf, itf, tp, t),
                    slow_decision(p, uf, itf, tp, t),
                    atol=1e-12,
                )


def test_values_are_two_level_monotone():
    """Nonnegative blocks force f(t', t+1) <= f(t', t) <= f(t'+1, t)."""
    rng = np.random.default_rng(21)
    sc = toy_schema(p1=1, p2=1, cards_u=(2,), cards_i=(3,), T=4)
    for _ in range(50):
        p = random_params(sc, 2, rng)
        uf = UserFeatures(rng.random(1), (int(rng.integers(1, 3)),))
        itf = ItemFeatures(rng.random(1), (int(rng.integers(1, 4)),))
        F = {
            (tp, t): decision_value(p, uf, itf, tp, t)
            for tp in range(4)
            for t in range(tp + 1, 5)
        }
        for (tp, t), v in F.items():
            if (tp, t + 1) in F:
                assert F[(tp, t + 1)] <= v + 1e-12
            if (tp + 1, t) in F and tp + 1 < t:
                assert v <= F[(tp + 1, t)] + 1e-12


def test_params_must_be_nonnegative():
    sc = toy_schema()
    rng = np.random.default_rng(0)
    good = random_params(sc, 2, rng)
    for field, shape in [("A", good.A.shape), ("q", good.q.shape)]:
        bad = np.array(getattr(good, field))
        bad.flat[0] = -1e-9
        with pytest.raises(ValueError):
            ModelParams(
                schema=sc, K=2,
                A=bad if field == "A" else good.A, B=good.B,
                a=good.a, b=good.b,
                q=bad if field == "q" else good.q,
            )


def test_params_shape_validation():
    sc = toy_schema()
    rng = np.random.default_rng(1)
    good = random_params(sc, 2, rng)
    with pytest.raises(ValueError):
        ModelParams(schema=sc, K=2, A=good.A[:, :0], B=good.B, a=good.a, b=good.b, q=good.q)
    with pytest.raises(ValueError):
        ModelParams(schema=sc, K=2, A=good.A, B=good.B, a=good.a[:1], b=good.b, q=good.q)
    with pytest.raises(ValueError):
        ModelParams(schema=sc, K=2, A=good.A, B=good.B, a=good.a, b=good.b, q=good.q[:1])


# ---------------------------------------------------------------------------
# Predictions


def test_predict_dataset_masks_stopped_chains():
    ds = toy_dataset(T=3, seed=4, stay_prob=0.5)
    rng = np.random.default_rng(2)
    p = random_params(ds.schema, 2, rng)
    pred = predict_dataset(p, ds)
    assert pred.f.shape == (len(ds), len(pred.pairs))
    for n, inter in enumerate(ds.interactions):
        for pidx, (tp, t) in enumerate(pred.pairs):
            if tp >= 1 and inter.y[tp - 1] == -1:
                assert pred.phi[n, pidx] == -1
            else:
                expected = 1 if pred.f[n, pidx] > 0.0 else -1
                assert pred.phi[n, pidx] == expected
    assert not pred.assumed.any()


def test_zero_decision_value_predicts_negative():
    sc = toy_schema(p1=0, p2=0, cards_u=(1,), cards_i=(1,), T=1)
    p = ModelParams(
        schema=sc, K=1, A=np.zeros((1, 0)), B=np.zeros((1, 0)),
        a=(np.zeros((1, 1)),), b=(np.zeros((1, 1)),), q=np.zeros((1, 1)),
    )
    uf = UserFeatures(np.zeros(0), (1,))
    itf = ItemFeatures(np.zeros(0), (1,))
    assert decision_value(p, uf, itf, 0, 1) == 0.0
    assert predict_label(p, uf, itf, 0, 1) == -1


def test_predict_label_honors_observed_stop():
    p = categorical_params()
    uf = UserFeatures(np.zeros(0), (1,))
    itf = ItemFeatures(np.zeros(0), (1,))
    assert predict_label(p, uf, itf, 1, 2, y_t_prime=1) == 1
    assert predict_label(p, uf, itf, 1, 2, y_t_prime=-1) == -1


def test_predict_cells_label_free_flags_assumptions():
    ds = toy_dataset(T=2, seed=9)
    rng = np.random.default_rng(3)
    p = random_params(ds.schema, 2, rng)
    cells = [(0, 0), (1, 2), (3, 1)]
    pred = predict_cells(p, ds.users, ds.items, cells, [(0, 1), (0, 2), (1, 2)])
    assert pred.cells == tuple(cells)
    for pidx, (tp, _t) in enumerate(pred.pairs):
        assert pred.assumed[:, pidx].all() == (tp >= 1)
    with pytest.raises(ValueError):
        predict_cells(p, ds.users, ds.items, [(99, 0)], [(0, 1)])
    with pytest.raises(ValueError):
        predict_cells(p, ds.users, ds.items, [(0, 0)], [(1, 1)])


# ---------------------------------------------------------------------------
# Weights, sample costs, and the normalized objective


def test_expand_weights_presets():
    assert expand_weights("all", 2) == {(0, 1): 1.0, (0, 2): 1.0, (1, 2): 1.0}
    assert expand_weights("next", 2) == {(0, 1): 1.0, (0, 2): 0.0, (1, 2): 1.0}
    assert expand_weights("last", 2) == {(0, 1): 0.0, (0, 2): 1.0, (1, 2): 1.0}
    got = expand_weights({(0, 1): 2.0}, 2)
    assert got == {(0, 1): 2.0, (0, 2): 0.0, (1, 2): 0.0}


def test_expand_weights_rejects_bad_input():
    with pytest.raises(ValueError):
        expand_weights("sometimes", 2)
    with pytest.raises(ValueError):
        expand_weights({(1, 1): 1.0}, 2)
    with pytest.raises(ValueError):
        expand_weights({(0, 1): -1.0}, 2)
    with pytest.raises(ValueError):
        expand_weights({(0, 1): 0.0}, 2)


def test_hyperparams_validation():
    HyperParams(K=2)
    for kwargs in [
        {"K": 0},
        {"K": 2, "lambda1": -1.0},
        {"K": 2, "lambda2": float("nan")},
        {"K": 2, "tol_outer": 0.0},
        {"K": 2, "max_outer": 0},
        {"K": 2, "inner_tol": -1e-9},
        {"K": 2, "inner_max_iter": 0},
        {"K": 2, "weights": "never"},
        {"K": 2, "weights": {(2, 1): 1.0}},
    ]:
        with pytest.raises(ValueError):
            hp = HyperParams(**kwargs)
            if isinstance(hp.weights, str):
                expand_weights(hp.weights, 2)


def test_zero_params_objective_is_one():
    """All-zero parameters leave every margin at 0, so the normalized
    hinge risk is exactly 1 and the penalties vanish."""
    ds = toy_dataset(seed=6)
    sc = ds.schema
    zero = ModelParams(
        schema=sc, K=3,
        A=np.zeros((3, sc.p1)), B=np.zeros((3, sc.p2)),
        a=tuple(np.zeros((c, 3)) for c in sc.user_cardinalities),
        b=tuple(np.zeros((c, 3)) for c in sc.item_cardinalities),
        q=np.zeros((sc.T, 3)),
    )
    for weights in ("all", "next", "last"):
        hp = HyperParams(K=3, weights=weights)
        assert model_objective(ds, zero, hp) == 1.0


# ---------------------------------------------------------------------------
# Probability chains and the additive score construction


def test_chain_validation():
    ProbabilityChain((1.0, 0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        ProbabilityChain((0.9, 0.5))
    with pytest.raises(ValueError):
        ProbabilityChain((1.0, 0.5, 0.6))
    with pytest.raises(ValueError):
        ProbabilityChain((1.0, -0.1))
    with pytest.raises(ValueError):
        ProbabilityChain((1.0,))


def test_bayes_from_chain_hand_values():
    h, f = bayes_from_chain((1.0, 0.8, 0.2))
    np.testing.assert_allclose(
        h, [0.6931471805599453, 0.22314355131420976, 1.3862943611198906], rtol=1e-15
    )
    np.testing.assert_allclose(f[(0, 1)], 0.4700036292457355, rtol=1e-15)
    np.testing.assert_allclose(f[(0, 2)], -0.916290731874155, rtol=1e-15)
    np.testing.assert_allclose(f[(1, 2)], -0.6931471805599453, rtol=1e-15)


def test_bayes_from_chain_signs_match_probability_rule():
    rng = np.random.default_rng(15)
    for _ in range(200):
        T = int(rng.integers(1, 5))
        pi = np.sort(rng.uniform(0.01, 1.0, size=T))[::-1]
        chain = (1.0, *pi)
        h, f = bayes_from_chain(chain)
        assert np.all(h >= 0.0)
        for (tp, t), val in f.items():
            ratio = chain[t] / chain[tp]
            if abs(ratio - 0.5) > 1e-12:
                assert np.sign(val) == np.sign(ratio - 0.5)


def test_bayes_from_chain_scale_and_base():
    h1, f1 = bayes_from_chain((1.0, 0.6, 0.3))
    h2, f2 = bayes_from_chain((1.0, 0.6, 0.3), scale=3.0)
    np.testing.assert_allclose(h2, 3.0 * h1, rtol=1e-14)
    h3, _ = bayes_from_chain((1.0, 0.6, 0.3), base=2.0)
    assert abs(h3[0] - 1.0) < 1e-14
    with pytest.raises(ValueError):
        bayes_from_chain((1.0, 0.6, 0.3), base=1.0)
    with pytest.raises(ValueError):
        bayes_from_chain((1.0, 0.6, 0.0))


# ---------------------------------------------------------------------------
# Parameter accounting and one-hot encoding


def test_count_params_small_example():
    sc = toy_schema(p1=1, p2=2, cards_u=(2, 3), cards_i=(2,), T=2)
    width = 1 + 2 + 2 + 3 + 2
    assert count_params(sc, 4, "proposed") == (width + 2) * 4
    assert count_params(sc, 4, "standard") == width * 4 * 3
    assert count_params(sc, 4, "ordinal") == width * 4 * 2
    with pytest.raises(ValueError):
        count_params(sc, 4, "mystery")


def test_count_params_matches_stored_scalars():
    rng = np.random.default_rng(33)
    for _ in range(10):
        sc = toy_schema(
            p1=int(rng.integers(0, 3)),
            p2=int(rng.integers(0, 3)),
            cards_u=tuple(int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))),
            cards_i=tuple(int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))),
            T=int(rng.integers(1, 4)),
        )
        K = int(rng.integers(1, 5))
        p = init_params(sc, K, seed=0)
        stored = p.A.size + p.B.size + sum(t.size for t in p.a) + sum(t.size for t in p.b) + p.q.size
        assert count_params(sc, K, "proposed") == stored


def test_one_hot_layout():
    ds = toy_dataset(n_users=2, n_items=2, p1=1, p2=1, cards_u=(2,), cards_i=(3,), seed=12)
    X = one_hot_encode(ds)
    assert X.shape == (len(ds), ds.schema.one_hot_width)
    assert ds.schema.one_hot_width == 1 + 1 + 2 + 3
    for n, inter in enumerate(ds.interactions):
        uf, itf = ds.users[inter.i], ds.items[inter.j]
        row = np.zeros(7)
        row[0] = uf.u[0]
        row[1] = itf.v[0]
        row[2 + uf.s[0] - 1] = 1.0
        row[4 + itf.o[0] - 1] = 1.0
        np.testing.assert_array_equal(X[n], row)


# ---------------------------------------------------------------------------
# Model file round trips


def test_model_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(44)
    sc = toy_schema(p1=2, p2=1, cards_u=(3,), cards_i=(2, 2), T=3)
    p = random_params(sc, 3, rng)
    path = str(tmp_path / "m.json")
    cr.save_model(p, path)
    q = cr.load_model(path)
    assert isinstance(q, ModelParams)
    assert q.schema == p.schema and q.K == p.K
    np.testing.assert_array_equal(q.A, p.A)
    np.testing.assert_array_equal(q.B, p.B)
    for x, y in zip(q.a + q.b, p.a + p.b):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(q.q, p.q)
    cr.save_model(q, str(tmp_path / "m2.json"))
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_model_file_corruption_detected(tmp_path):
    rng = np.random.default_rng(45)
    p = random_params(toy_schema(), 2, rng)
    path = tmp_path / "m.json"
    cr.save_model(p, str(path))
    raw = path.read_text()
    (tmp_path / "trunc.json").write_text(raw[: len(raw) // 2])
    with pytest.raises(ValueError):
        cr.load_model(str(tmp_path / "trunc.json"))
    (tmp_path / "alien.json").write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ValueError):
        cr.load_model(str(tmp_path / "alien.json"))
