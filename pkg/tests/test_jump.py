import numpy as np

from tkgode import autodiff as ad
from tkgode.aggregator import AggLayerParams, stack_forward
from tkgode.autodiff import Tape, grad_check
from tkgode.data import JumpTensor, Snapshot
from tkgode.jump import JumpParams, apply_jump, init_jump, jump_layer_forward


def dense_jump(H, jt, w_ent, w_rel, act=np.tanh):
    n_ent, n_rel = jt.num_entities, jt.relation_space
    cube = np.zeros((n_ent, n_rel, n_ent))
    for (s, r, o), sign in zip(jt.edges, jt.signs):
        cube[s, r, o] += sign
    out = np.zeros_like(H)
    for o in range(n_ent):
        acc, n = np.zeros(H.shape[1]), 0
        for s in range(n_ent):
            for r in range(n_rel):
                if cube[s, r, o]:
                    acc += cube[s, r, o] * H[s] * H[n_ent + r]
                    n += 1
        if n:
            out[o] = act(w_ent * acc / n)
    out[n_ent:] = H[n_ent:] * w_rel
    return out


def random_jump(rng, n_ent=5, n_rel=2, n=8):
    cells = set()
    while len(cells) < n:
        cells.add((int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent))))
    edges = np.array(sorted(cells))
    return JumpTensor(0, edges, rng.choice([-1.0, 1.0], size=n), n_ent, n_rel)


def params(tape, d, w=0.1, w_ent=None, w_rel=None):
    ones = init_jump(d)
    return JumpParams(tape.leaf(ones["W_ent"] if w_ent is None else w_ent),
                      tape.leaf(ones["W_rel"] if w_rel is None else w_rel), w)


def test_empty_tensor_zero_entity_shift(rng):
    H = rng.normal(size=(7, 3))
    tape = Tape()
    out = jump_layer_forward(tape.leaf(H), JumpTensor.empty(0, 5, 2), params(tape, 3)).value
    np.testing.assert_array_equal(out[:5], 0.0)


def test_single_delta_sign(rng):
    H = rng.normal(size=(4, 3))
    tape = Tape()
    for sign in (1.0, -1.0):
        jt = JumpTensor(0, [[0, 0, 2]], [sign], 3, 1)
        H3 = H[:4]
        out = jump_layer_forward(tape.leaf(H3), jt, params(tape, 3), activation="identity").value
        np.testing.assert_allclose(out[2], sign * H3[0] * H3[3])
        out_t = jump_layer_forward(tape.leaf(H3), jt, params(tape, 3)).value
        np.testing.assert_allclose(out_t[2], np.tanh(sign * H3[0] * H3[3]))


def test_dense_loop_oracle(rng):
    jt = random_jump(rng)
    H = rng.normal(size=(7, 4))
    w_ent, w_rel = rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
    tape = Tape()
    got = jump_layer_forward(tape.leaf(H), jt, params(tape, 4, w_ent=w_ent, w_rel=w_rel)).value
    np.testing.assert_allclose(got, dense_jump(H, jt, w_ent[0], w_rel[0]), atol=1e-13)


def test_apply_jump_examples(rng):
    jt = random_jump(rng)
    H_pre, H_agg = rng.normal(size=(7, 4)), rng.normal(size=(7, 4))
    tape = Tape()
    agg = tape.leaf(H_agg)
    assert apply_jump(agg, tape.leaf(H_pre), jt, params(tape, 4, w=0.0)) is agg
    w_rel = rng.normal(size=(1, 4))
    out = apply_jump(agg, tape.leaf(H_pre), JumpTensor.empty(0, 5, 2),
                     params(tape, 4, w=0.3, w_rel=w_rel)).value
    np.testing.assert_array_equal(out[:5], H_agg[:5])
    np.testing.assert_allclose(out[5:], H_agg[5:] + 0.3 * w_rel * H_pre[5:])
    w_ent = rng.normal(size=(1, 4))
    full = apply_jump(agg, tape.leaf(H_pre), jt, params(tape, 4, 0.3, w_ent, w_rel)).value
    np.testing.assert_allclose(full, H_agg + 0.3 * dense_jump(H_pre, jt, w_ent[0], w_rel[0]),
                               atol=1e-13)


def test_w_zero_matches_no_jump_forward(rng):
    snap = Snapshot(0, [[0, 0, 1], [2, 1, 1], [1, 0, 3]], 5, 2)
    H = rng.normal(size=(7, 3))
    tape = Tape()
    layer = AggLayerParams(tape.leaf(rng.normal(size=(3, 3))), tape.leaf(rng.normal(size=(3, 3))),
                           tape.leaf([[0.1]]))
    plain = stack_forward(tape.leaf(H), snap, [layer]).value
    with_switch = apply_jump(stack_forward(tape.leaf(H), snap, [layer]), tape.leaf(H),
                             random_jump(rng), params(tape, 3, w=0.0)).value
    assert plain.tobytes() == with_switch.tobytes()


def test_permuting_deltas_and_negating_signs(rng):
    jt = random_jump(rng, n=10)
    H = rng.normal(size=(7, 3))
    order = rng.permutation(len(jt))
    shuffled = JumpTensor(0, jt.edges[order], jt.signs[order], 5, 2)
    negated = JumpTensor(0, jt.edges, -jt.signs, 5, 2)
    tape = Tape()
    p = params(tape, 3)
    base = jump_layer_forward(tape.leaf(H), jt, p, "identity").value
    np.testing.assert_allclose(jump_layer_forward(tape.leaf(H), shuffled, p, "identity").value,
                               base, atol=1e-15)
    neg = jump_layer_forward(tape.leaf(H), negated, p, "identity").value
    np.testing.assert_array_equal(neg[:5], -base[:5])


def test_jump_gradients(rng):
    jt = random_jump(rng)
    H = rng.uniform(-1, 1, size=(7, 3))
    w_ent, w_rel = rng.uniform(-1, 1, (1, 3)), rng.uniform(-1, 1, (1, 3))
    flat = np.concatenate([H.ravel(), w_ent.ravel(), w_rel.ravel()])

    def f(x):
        tape = Tape()
        Hv = tape.leaf(x[:21].reshape(7, 3))
        we, wr = tape.leaf(x[21:24].reshape(1, 3)), tape.leaf(x[24:].reshape(1, 3))
        loss = ad.sum_all(ad.tanh(jump_layer_forward(Hv, jt, JumpParams(we, wr, 0.1))))
        g = tape.backward(loss)
        return float(loss.value[0, 0]), np.concatenate([g[Hv].ravel(), g[we].ravel(), g[wr].ravel()])

    assert grad_check(f, flat, 1e-6) < 1e-5
