"""Loss formulas against independent scalar-loop oracles."""

import math

import pytest
import torch

from brnet.losses import (
    LossWeights,
    cls_loss,
    cons_loss,
    dec_loss,
    mask_bce,
    reg_loss,
    rmask_loss,
    smooth_l1,
    total_loss,
)

EPS = 1e-7


def bce_scalar(p, t):
    p = min(max(p, EPS), 1.0 - EPS)
    return -(t * math.log(p) + (1.0 - t) * math.log(1.0 - p))


def nested_oracle_single(pred_lists, target_lists):
    """(1/K) sum_k (1/A_k) sum_i pixel-mean BCE, scalar loops only."""
    image_terms = []
    for preds, tgts in zip(pred_lists, target_lists):
        if preds.shape[0] == 0:
            continue
        inst_terms = []
        for p_inst, t_inst in zip(preds, tgts):
            acc = 0.0
            h, w = p_inst.shape
            for y in range(h):
                for x in range(w):
                    acc += bce_scalar(float(p_inst[y, x]), float(t_inst[y, x]))
            inst_terms.append(acc / (h * w))
        image_terms.append(sum(inst_terms) / len(inst_terms))
    if not image_terms:
        return 0.0
    return sum(image_terms) / len(image_terms)


def rand_stacks(rng_seed, counts, h=5, w=4):
    # float64 throughout so scalar-loop comparison is exact to 1e-12
    g = torch.Generator().manual_seed(rng_seed)
    preds = [torch.rand(a, h, w, generator=g, dtype=torch.float64) for a in counts]
    tgts = [
        (torch.rand(a, h, w, generator=g, dtype=torch.float64) < 0.4).double()
        for a in counts
    ]
    return preds, tgts


def test_smooth_l1_point_values():
    x = torch.tensor([0.0, 0.5, -0.5, 1.0, 1.5, -3.0])
    want = torch.tensor([0.0, 0.125, 0.125, 0.5, 1.0, 2.5])
    assert torch.allclose(smooth_l1(x), want, atol=1e-12)


def test_smooth_l1_continuity_at_one():
    below = smooth_l1(torch.tensor(1.0 - 1e-9))
    above = smooth_l1(torch.tensor(1.0 + 1e-9))
    assert abs(float(below) - float(above)) < 1e-8


def test_cls_loss_matches_manual_cross_entropy():
    logits = torch.tensor([[2.0, -1.0], [0.5, 0.5], [-3.0, 1.0]])
    labels = torch.tensor([0, 1, 1])
    want = 0.0
    for row, lab in zip(logits, labels):
        z = torch.logsumexp(row, dim=0)
        want += float(z - row[lab])
    assert float(cls_loss(logits, labels)) == pytest.approx(want / 3, abs=1e-6)


def test_cls_loss_empty_batch_is_zero_and_counted():
    from brnet.losses import LossDiagnostics

    diag = LossDiagnostics()
    out = cls_loss(torch.zeros((0, 2)), torch.zeros(0, dtype=torch.long), diag)
    assert float(out) == 0.0
    assert diag.empty_cls_batches == 1


def test_reg_loss_sums_coords_then_averages_rois():
    pred = torch.tensor([[0.5, 0.0, 2.0, -0.25], [0.0, 0.0, 0.0, 0.0]])
    tgt = torch.zeros(2, 4)
    want_roi0 = 0.125 + 0.0 + 1.5 + 0.5 * 0.0625
    assert float(reg_loss(pred, tgt)) == pytest.approx(want_roi0 / 2, abs=1e-12)


def test_mask_bce_matches_scalar_loop():
    g = torch.Generator().manual_seed(0)
    for _ in range(20):
        pred = torch.rand(3, 4, 4, generator=g, dtype=torch.float64)
        tgt = torch.rand(3, 4, 4, generator=g, dtype=torch.float64)  # soft targets
        acc = 0.0
        for p, t in zip(pred.flatten().tolist(), tgt.flatten().tolist()):
            acc += bce_scalar(p, t)
        assert float(mask_bce(pred, tgt)) == pytest.approx(
            acc / pred.numel(), abs=1e-12
        )
    with pytest.raises(ValueError):
        mask_bce(torch.rand(2, 4, 4), torch.rand(2, 4, 5))


def test_mask_bce_logit_path_agrees_in_value():
    g = torch.Generator().manual_seed(1)
    logits = torch.randn(2, 6, 6, generator=g, dtype=torch.float64) * 4
    tgt = (torch.rand(2, 6, 6, generator=g, dtype=torch.float64) < 0.5).double()
    a = mask_bce(torch.sigmoid(logits), tgt)
    b = mask_bce(logits, tgt, from_logits=True)
    assert float(a) == pytest.approx(float(b), abs=1e-12)


def test_dec_loss_matches_nested_oracle():
    for seed, counts in [(0, (2, 3)), (1, (1, 4, 2)), (2, (3,))]:
        o_p, o_t = rand_stacks(seed, counts)
        n_p, n_t = rand_stacks(seed + 100, counts)
        want = nested_oracle_single(o_p, o_t) + nested_oracle_single(n_p, n_t)
        # per-image the two sub-terms share the same 1/A_k, so the sum of
        # independent oracles equals the joint loss only when every image
        # contributes; counts above guarantee that
        got = float(dec_loss(o_p, o_t, n_p, n_t))
        assert got == pytest.approx(want, abs=1e-12)


def test_dec_loss_skips_empty_images():
    o_p, o_t = rand_stacks(3, (2, 0, 3))
    n_p, n_t = rand_stacks(4, (2, 0, 3))
    got = float(dec_loss(o_p, o_t, n_p, n_t))
    o_p2 = [o_p[0], o_p[2]]
    o_t2 = [o_t[0], o_t[2]]
    n_p2 = [n_p[0], n_p[2]]
    n_t2 = [n_t[0], n_t[2]]
    assert got == pytest.approx(float(dec_loss(o_p2, o_t2, n_p2, n_t2)), abs=1e-12)


def test_rmask_loss_matches_nested_oracle():
    for seed, counts in [(5, (2, 1)), (6, (4,)), (7, (1, 2, 3))]:
        r_p, r_t = rand_stacks(seed, counts)
        assert float(rmask_loss(r_p, r_t)) == pytest.approx(
            nested_oracle_single(r_p, r_t), abs=1e-12
        )


def test_cons_loss_uses_detached_xor_merge_target():
    g = torch.Generator().manual_seed(8)
    mk = lambda: torch.rand(
        2, 4, 4, generator=g, dtype=torch.float64
    ).requires_grad_(True)
    r, o, n = [mk()], [mk()], [mk()]
    loss = cons_loss(r, o, n)
    merged = [(o[0] + n[0] - 2 * o[0] * n[0]).detach()]
    want = nested_oracle_single(r, merged)
    assert float(loss) == pytest.approx(want, abs=1e-12)
    loss.backward()
    assert r[0].grad is not None and r[0].grad.abs().sum() > 0
    assert o[0].grad is None or o[0].grad.abs().sum() == 0
    assert n[0].grad is None or n[0].grad.abs().sum() == 0


def test_total_loss_lambda_arithmetic():
    vals = [torch.tensor(v, dtype=torch.float64)
            for v in (0.3, 0.2, 0.5, 0.7, 0.11, 0.13)]
    w = LossWeights(lambda_dec=2.0, lambda_rmask=0.5, lambda_cons=3.0)
    bundle = total_loss(*vals, w)
    assert float(bundle.l_coarse) == pytest.approx(1.0, abs=1e-12)
    want = 1.0 + 2.0 * 0.7 + 0.5 * 0.11 + 3.0 * 0.13
    assert float(bundle.total) == pytest.approx(want, abs=1e-12)
    with pytest.raises(ValueError):
        LossWeights(lambda_dec=-0.1)


def test_total_loss_gradient_check():
    # drive the whole composition from raw probabilities at float64. The
    # consistency target is detached inside cons_loss, so its value is fixed
    # up front; finite differences would otherwise see through the detach.
    g = torch.Generator().manual_seed(9)
    o0, n0, r0, cm0 = (
        (0.2 + 0.6 * torch.rand(2, 3, 3, generator=g)).double() for _ in range(4)
    )
    merged_const = (o0 + n0 - 2 * o0 * n0).detach()

    def compose(o, n, r, cm):
        l_cmask = mask_bce(cm, torch.full_like(cm, 0.3))
        l_dec = dec_loss([o], [torch.full_like(o, 1.0)], [n], [torch.zeros_like(n)])
        l_rmask = rmask_loss([r], [torch.full_like(r, 0.6)])
        l_cons = rmask_loss([r], [merged_const])
        z = torch.zeros((), dtype=o.dtype)
        return total_loss(z, z, l_cmask, l_dec, l_rmask, l_cons, LossWeights()).total

    args = tuple(t.clone().requires_grad_(True) for t in (o0, n0, r0, cm0))
    assert torch.autograd.gradcheck(compose, args, eps=1e-6, atol=1e-7, rtol=1e-4)
