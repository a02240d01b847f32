"""End-to-end acceptance checks, one test per criterion.

Each test reports a single PASS/FAIL line, repeated in the pytest terminal
summary. The two training criteria are marked ``slow``; ``-m "not slow"``
gives a pass of a couple of minutes.
"""

import time

import numpy as np
import pytest

from maxim import checkpoint, config, gradsuite
from maxim.autodiff import Tensor, ops
from maxim.blocks import MultiAxisBlock, mab_flops
from maxim.cost import count_model, count_module
from maxim.data import synthetic_images
from maxim.mixers import KINDS
from maxim.multistage import ModelConfig, StageOutputs, freq_loss, preset, target_pyramid, total_loss
from maxim.partition import block, grid, invert, mix_on_axis
from maxim.train import build_model, evaluate, held_out_pairs, model_forward, pad_infer, train

from .conftest import bind_f64, t64
from .test_autodiff import brute_l1diff


def test_parameter_counts(criterion):
    bands = {"maxim-1s": (5.2e6, 7.0e6), "maxim-2s": (12.0e6, 16.2e6), "maxim-3s": (18.9e6, 25.5e6)}
    counts = {name: count_model(preset(name), 256, 256).params for name in bands}
    ok = all(lo <= counts[n] <= hi for n, (lo, hi) in bands.items())
    detail = ", ".join(f"{n}={counts[n] / 1e6:.2f}M in [{lo / 1e6:.1f}, {hi / 1e6:.1f}]" for n, (lo, hi) in bands.items())
    criterion(1, ok, detail)


def test_flops_against_published(criterion):
    targets = {"maxim-2s": 216.0, "maxim-3s": 339.2}
    got = {n: count_model(preset(n), 256, 256) for n in targets}
    ok = all(abs(got[n].flops / 1e9 / g - 1) <= 0.20 for n, g in targets.items())
    detail = ", ".join(
        f"{n}={got[n].flops / 1e9:.1f}G (MAC=2; {got[n].flops_mac1 / 1e9:.1f}G MAC=1) vs {g}G ±20%"
        for n, g in targets.items()
    )
    criterion(2, ok, detail)


def test_single_block_cost_formula(criterion):
    worst = 0.0
    for hw in (64, 128, 256):
        for c in (32, 64):
            counted = count_module(MultiAxisBlock(c, 16, 16), (1, hw, hw, c)).flops_mac1
            worst = max(worst, abs(counted / mab_flops(hw, hw, c, 16, 16) - 1))
    criterion(3, worst <= 0.15, f"max deviation {worst:.1%} from the closed form (multiply-accumulate = 1), band 15%")


def test_flops_linear_in_height(criterion):
    rows = []
    for name, h, w in [("tiny", 64, 64), ("maxim-1s", 256, 256)]:
        base = count_model(preset(name), h, w).flops
        tall = count_model(preset(name), 2 * h, w).flops
        rows.append((name, tall - 2 * base))
    ok = all(excess == 0 for _, excess in rows)
    criterion(4, ok, "FLOPs(2H,W) - 2 FLOPs(H,W): " + ", ".join(f"{n}={e:+,}" for n, e in rows))


def test_gradient_suite(criterion):
    start = time.perf_counter()
    outcomes = list(gradsuite.run())
    seconds = time.perf_counter() - start
    failed = [o.name for o in outcomes if not o.passed]
    worst = {}
    for o in outcomes:
        worst[o.tol] = max(worst.get(o.tol, 0.0), o.error)
    summary = ", ".join(f"max {err:.1e} (< {tol:.0e})" for tol, err in sorted(worst.items()))
    ok = not failed and seconds < 300 and {o.suite for o in outcomes} >= {"primitive", "block", "stage"}
    criterion(5, ok, f"{len(outcomes)} checks in {seconds:.0f}s; {summary}; failed={failed}")


def _impulse_witness(branch: str) -> bool:
    m = MultiAxisBlock(4, 4, 4)
    r = np.random.default_rng(11)
    bind_f64(m, 5, **{f"{b}/spatial/w": r.standard_normal((16, 16)) for b in ("local", "globl")})
    x = r.standard_normal((1, 8, 8, 4))
    mixer = m.local if branch == "local" else m.globl

    def run(a):
        t = t64(a)
        if branch == "local":
            return invert(mix_on_axis(block(t, 4), mixer, "within")).data
        return invert(mix_on_axis(grid(t, 4), mixer, "group")).data

    base = run(x)
    for h in range(8):
        for w in range(8):
            bumped = x.copy()
            bumped[0, h, w, 0] += 1.0
            support = np.abs(run(bumped) - base).sum(axis=(0, 3)) > 1e-12
            expect = np.zeros((8, 8), bool)
            if branch == "local":
                expect[h // 4 * 4 : h // 4 * 4 + 4, w // 4 * 4 : w // 4 * 4 + 4] = True
            else:
                expect[h % 2 :: 2, w % 2 :: 2] = True
            if not np.array_equal(support, expect):
                return False
    return True


def test_partition_algebra(criterion):
    r = np.random.default_rng(2024)
    failures = 0
    trials = 10_000
    for i in range(trials):
        kind = i % 3
        n, c = int(r.integers(1, 3)), int(r.integers(1, 4))
        if kind < 2:
            window = int(r.integers(1, 5))
            x = Tensor(r.standard_normal((n, window * int(r.integers(1, 5)), window * int(r.integers(1, 5)), c)))
            view = (block if kind == 0 else grid)(x, window)
            failures += not np.array_equal(invert(view).data, x.data)
        else:
            h, w = int(r.integers(2, 9)), int(r.integers(2, 9))
            t, b, lft, rgt = (int(v) for v in r.integers(0, 2, size=4) * r.integers(0, min(h, w), size=4))
            mode = ("constant", "reflect", "symmetric", "edge")[int(r.integers(4))]
            x = Tensor(r.standard_normal((n, h, w, c)))
            padded = ops.pad2d(x, t, b, lft, rgt, mode)
            failures += not np.array_equal(ops.crop(padded, t, lft, h, w).data, x.data)
    local_ok, global_ok = _impulse_witness("local"), _impulse_witness("global")
    ok = failures == 0 and local_ok and global_ok
    criterion(6, ok, f"{trials - failures}/{trials} round trips exact; 8x8 impulse witnesses local={local_ok} global={global_ok}")


def test_fully_convolutional(criterion):
    model, _ = build_model(preset("maxim-1s"))
    shapes = {}
    for h, w in [(256, 256), (320, 320), (256, 512)]:
        shapes[(h, w)] = model_forward(model, np.zeros((1, h, w, 3), np.float32)).shape
    img = np.random.default_rng(0).uniform(size=(300, 500, 3)).astype(np.float32)
    padded_out = pad_infer(img, model)
    ok = all(s == (1, h, w, 3) for (h, w), s in shapes.items()) and padded_out.shape == (300, 500, 3)
    detail = ", ".join(f"{h}x{w}->{s[1]}x{s[2]}" for (h, w), s in shapes.items())
    criterion(7, ok, f"{detail}; pad_infer 300x500->{padded_out.shape[0]}x{padded_out.shape[1]}")


def test_loss_identities(criterion):
    r = np.random.default_rng(9)
    target = r.uniform(size=(2, 16, 16, 3))
    worst = 0.0
    for stages in (1, 2, 3):
        cfg = ModelConfig(stages=stages, scales=3)
        pyr = target_pyramid(t64(target), 3)
        loss = total_loss(StageOutputs([list(pyr)] * stages, [None] * stages), t64(target), cfg).item()
        worst = max(worst, abs(loss - stages * 3 * 1e-3))
    a = r.uniform(size=(1, 4, 4, 3))
    identity = freq_loss(t64(a), t64(a)).item()
    imp = np.zeros((1, 2, 2, 1))
    imp[0, 0, 0, 0] = 1.0
    impulse = freq_loss(t64(imp), t64(np.zeros_like(imp))).item()
    oracle_err = abs(impulse - brute_l1diff(imp, np.zeros_like(imp)))
    ok = worst <= 1e-9 and identity == 0.0 and oracle_err <= 1e-9 and abs(impulse - 1.0) <= 1e-9
    criterion(9, ok, f"|L - S*N*1e-3| max {worst:.1e}; freq(x,x)={identity}; 2x2 impulse={impulse} (oracle diff {oracle_err:.1e})")


def test_mixer_family(criterion):
    grads = list(gradsuite.run("mixers"))
    forward_ok = True
    for kind in KINDS:
        m = MultiAxisBlock(8, 4, 4, mixer=kind)
        bind_f64(m)
        forward_ok &= m(t64(np.random.default_rng(0).standard_normal((1, 8, 8, 8)))).shape == (1, 8, 8, 8)
    counts = {k: count_model(preset("maxim-1s", k), 256, 256).params for k in KINDS}
    order_ok = counts["fft"] < counts["mlp"] < counts["gmlp"]
    ok = forward_ok and all(o.passed for o in grads) and len(grads) == len(KINDS) and order_ok
    detail = ", ".join(f"{k}={counts[k] / 1e6:.2f}M" for k in KINDS)
    criterion(10, ok, f"gradchecks {sum(o.passed for o in grads)}/{len(grads)}; params {detail}")


@pytest.mark.slow
def test_determinism(criterion, tmp_path):
    cfg = config.parse("profile = tiny\nsteps = 200\n")
    blobs = []
    for run in ("a", "b"):
        train(cfg, log=None, out_dir=tmp_path / run)
        blobs.append((tmp_path / run / "final.ckpt").read_bytes())
    same_ckpt = blobs[0] == blobs[1]
    model, params = build_model(cfg.model, seed=cfg.seed)
    checkpoint.load(tmp_path / "a" / "final.ckpt", params, cfg.model.digest())
    resaved = tmp_path / "resaved.ckpt"
    checkpoint.save(resaved, params, cfg.model.digest())
    reloaded, params2 = build_model(cfg.model, seed=cfg.seed + 1)
    checkpoint.load(resaved, params2, cfg.model.digest())
    pairs = held_out_pairs(cfg, count=2)
    x = np.stack([p[0][:64, :64] for p in pairs]).astype(np.float32)
    same_eval = evaluate(model, pairs) == evaluate(reloaded, pairs)
    same_out = np.array_equal(model_forward(model, x), model_forward(reloaded, x))
    ok = same_ckpt and same_eval and same_out
    criterion(11, ok, f"checkpoints identical={same_ckpt} ({len(blobs[0]):,} bytes); eval after save/load identical={same_eval and same_out}")


@pytest.mark.slow
def test_training_denoises(criterion, tmp_path):
    cfg = config.parse("profile = tiny\nsteps = 3000\nlog_every = 500\n")
    clean = {img.tobytes() for img in synthetic_images(cfg.synthetic_images, cfg.synthetic_size, cfg.seed)}
    result = train(cfg, log=None, out_dir=tmp_path)
    scores = evaluate(result.model, held_out_pairs(cfg))
    gain = scores.psnr - scores.input_psnr
    minutes = result.seconds / 60
    ok = len(clean) >= 20 and gain >= 3.0 and minutes <= 30.0
    criterion(
        8,
        ok,
        f"{len(clean)} clean images; held-out PSNR {scores.psnr:.2f} dB vs noisy {scores.input_psnr:.2f} dB "
        f"(gain {gain:+.2f}, need +3.00); training {minutes:.1f} min (limit 30)",
    )
