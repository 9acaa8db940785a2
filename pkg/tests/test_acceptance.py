"""Acceptance criteria 1-7, each checked at its stated tolerance.

Each test records one PASS/FAIL line, shown in the "acceptance criteria"
section of the pytest summary. Run alone with ``pytest tests/test_acceptance.py``.
"""
import json
import time

import numpy as np
import pytest

from rrbe import bench
from rrbe.codec import (
    FRAME_BITS,
    build_schedule,
    encode,
    extract,
    load_marked,
    max_payload_bits,
    read_stream,
    recover_image,
    save_marked,
)
from rrbe.image import load_pgm
from rrbe.kernels import scalar
from rrbe.kernels.numpy_impl import recover_values
from rrbe.predict import L_COEFS, L_VECTOR, PredictorKind, RegressionSystem, fit_coefficients, \
    solve_least_squares
from rrbe.room import analyze

from .conftest import ACCEPTANCE, CORPUS, make_keys

KINDS = ["med", "gap", "sgap", "l", "al", "al16", "al32", "al64"]
BLOCKS = [(2, 4), (3, 3), (4, 4)]
TOTAL_LIMIT = 600.0
CONFIG_TARGET = 2.0


def record(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def desk_corpus():
    manifest = CORPUS / "manifest.json"
    if not manifest.exists():
        pytest.fail(f"corpus manifest missing under {CORPUS}")
    names = json.loads(manifest.read_text())["desk"]
    return [(n, load_pgm(CORPUS / f"{n}.pgm")) for n in names]


def labels_by_hand(pe, grid):
    """Label rule written out independently: n = bit length of the block's max |e|."""
    e_max = np.abs(grid.to_blocks(pe.astype(np.int64))).max(axis=1)
    out = []
    for m in e_max:
        n = int(m).bit_length()
        out.append(8 if n == 0 else max(0, 7 - n))
    return np.array(out)


def cells_by_hand(region, g):
    rows = {r // g for r in range(region.r0, region.r1)}
    cols = {c // g for c in range(region.c0, region.c1)}
    return len(rows) * len(cols)


@pytest.fixture(scope="module")
def sweep():
    """Criterion 1 sweep; criterion 3 reuses its per-configuration accounting."""
    corpus = desk_corpus()
    # compile the kernels before timing
    warm = analyze(corpus[0][1][:32, :32], "al16", 2, 4)
    encode(corpus[0][1][:32, :32], [], "al16", 2, 4, make_keys(0)[0], analysis=warm)
    rows = []
    t_all = time.perf_counter()
    for i, (name, img) in enumerate(corpus):
        for kind in KINDS:
            for q, w in BLOCKS:
                t0 = time.perf_counter()
                K_e, K_d, K_s = make_keys(hash((name, kind, q, w)) & 0xFFFF)
                K_s = K_s if (i + q) % 2 else None
                a = analyze(img, kind, q, w)
                n = max_payload_bits(a.labels, a.grid, kind)
                payload = np.random.default_rng([i, q, w, len(kind)]).integers(0, 2, n, dtype=np.uint8)
                marked = encode(img, payload, kind, q, w, K_e, K_d, K_s, analysis=a)
                ok_bits = np.array_equal(extract(marked, K_d=K_d, K_s=K_s), payload)
                ok_img = np.array_equal(recover_image(marked, K_e, K_s), img)
                dt = time.perf_counter() - t0
                _, sched = build_schedule(a.labels, a.grid)
                tail = read_stream(marked.pixels, sched)[marked.bits_written :]
                rows.append(dict(name=name, kind=kind, q=q, w=w, ok=ok_bits and ok_img, dt=dt,
                                 analysis=a, n=n, written=marked.bits_written,
                                 tail_len=tail.size, tail_zero=not tail.any()))
    return rows, time.perf_counter() - t_all


def test_criterion_1_exact_reversibility(sweep):
    rows, total = sweep
    bad = [f"{r['name']}/{r['kind']}/{r['q']}x{r['w']}" for r in rows if not r["ok"]]
    slowest = max(rows, key=lambda r: r["dt"])
    ok = len(rows) == 288 and not bad and total < TOTAL_LIMIT and slowest["dt"] < CONFIG_TARGET
    record(1, ok, f"{len(rows) - len(bad)}/{len(rows)} exact round trips, total {total:.1f}s "
           f"(limit {TOTAL_LIMIT:.0f}s), slowest {slowest['dt']:.2f}s "
           f"({slowest['name']}/{slowest['kind']}/{slowest['q']}x{slowest['w']})"
           + (f"; failed: {bad[:5]}" if bad else ""))
    assert ok


def test_criterion_2_recovery_brute_force():
    t0 = time.perf_counter()
    dec, pred, ell, want = [], [], [], []
    for L in range(1, 7):
        low = (1 << (8 - L)) - 1
        half = 1 << (8 - L - 1)
        p = np.arange(256)
        e = np.arange(-half + 1, half)
        msb = np.arange(1 << L)
        P, E, M = np.meshgrid(p, e, msb, indexing="ij")
        H = P + E
        keep = (H >= 0) & (H <= 255)
        P, H, M = P[keep], H[keep], M[keep]
        dec.append((M << (8 - L)) | (H & low))
        pred.append(P)
        ell.append(np.full(P.size, L))
        want.append(H)
    dec, pred, ell, want = map(np.concatenate, (dec, pred, ell, want))
    got_vec = recover_values(dec, pred, ell)
    hits_vec = int(np.sum(got_vec == want))
    hits_scalar = sum(scalar.recover_value(int(d), int(p), int(l)) == int(h)
                      for d, p, l, h in zip(dec, pred, ell, want))
    dt = time.perf_counter() - t0
    n = want.size
    ok = hits_vec == n and hits_scalar == n and dt < 5.0
    record(2, ok, f"{hits_scalar}/{n} scalar and {hits_vec}/{n} vectorised cases recovered "
           f"in {dt:.2f}s (limit 5s)")
    assert ok


def test_criterion_3_capacity_accounting(sweep):
    rows, _ = sweep
    bad = []
    for r in rows:
        a = r["analysis"]
        rep = a.report
        ells = labels_by_hand(a.pe, a.grid)
        C = int(ells.sum()) * a.grid.I
        g = PredictorKind(r["kind"]).grid_size
        coef = 0 if g is None else 60 * cells_by_hand(a.grid.region, g)
        K = a.grid.K
        unused = C - r["written"]
        checks = [
            rep.C == C,
            rep.coef_overhead == coef,
            rep.C_p == C - 3 * K - coef,
            r["written"] == 3 * K + FRAME_BITS + r["n"],
            r["written"] == C - unused and r["tail_len"] == unused and r["tail_zero"],
            unused == coef,
            rep.ER == rep.C_p / (a.pe.shape[0] + 2) / (a.pe.shape[1] + 2)
            or rep.n_pixels != (a.pe.shape[0] + 2) * (a.pe.shape[1] + 2),
        ]
        if not all(checks):
            bad.append(f"{r['name']}/{r['kind']}/{r['q']}x{r['w']}:{checks}")
    ok = not bad and len(rows) == 288
    record(3, ok, f"{len(rows) - len(bad)}/{len(rows)} configurations satisfy the integer "
           "identities exactly" + (f"; first failure {bad[0]}" if bad else ""))
    assert ok


def test_criterion_4_reference_rates():
    lines, all_ok = [], True
    for (name, kind, q, w), target in bench.REFERENCE_ER.items():
        path = CORPUS / f"{name}.pgm"
        if not path.exists():
            lines.append(f"{name}/{kind}/{q}x{w}: image not in corpus (target {target})")
            all_ok = False
            continue
        er = analyze(load_pgm(path), kind, q, w).report.ER
        ok = abs(er - target) <= bench.REFERENCE_TOLERANCE
        all_ok &= ok
        lines.append(f"{name}/{kind}/{q}x{w}: {er:.3f} vs {target} ({er - target:+.3f})")
    record(4, all_ok, f"tolerance +-{bench.REFERENCE_TOLERANCE}; " + "; ".join(lines))
    assert all_ok, "\n".join(lines)


def test_criterion_5_predictor_ordering():
    corpus, errors = bench.load_corpus(CORPUS)
    causal = [k.value for k in PredictorKind if k.causal]
    avg = bench.pe_histogram(corpus, ["cb"] + causal).average()
    er_al32 = np.mean([analyze(img, "al32", 2, 4).report.ER for _, img in corpus])
    er_l = np.mean([analyze(img, "l", 2, 4).report.ER for _, img in corpus])
    best_causal = max(causal, key=lambda k: avg[k]["p0"])
    c_l = avg["l"]["mean_abs"] <= avg["sgap"]["mean_abs"]
    c_cb = avg["cb"]["p0"] >= avg[best_causal]["p0"]
    c_al = er_al32 >= er_l
    ok = len(corpus) >= 20 and not errors and c_l and c_cb and c_al
    record(5, ok, f"{len(corpus)} images; mean|e| L {avg['l']['mean_abs']:.3f} <= SGAP "
           f"{avg['sgap']['mean_abs']:.3f}: {c_l}; zero-bin CB {avg['cb']['p0']:.4f} >= best causal "
           f"{best_causal} {avg[best_causal]['p0']:.4f}: {c_cb}; ER AL32 {er_al32:.3f} >= L "
           f"{er_l:.3f} (diff {er_al32 - er_l:+.3f}): {c_al}")
    assert ok


def test_criterion_6_least_squares():
    rng = np.random.default_rng(2024)
    worst, sse_bad, full_rank = 0.0, 0, 0
    while full_rank < 1000:
        T = int(rng.integers(4, 400))
        X = rng.integers(0, 256, (T, 4))
        if np.linalg.matrix_rank(X) < 4:
            continue
        full_rank += 1
        Y = rng.integers(0, 256, T)
        a = solve_least_squares(RegressionSystem(X, Y))
        Xf, Yf = X.astype(float), Y.astype(float)
        ratio = np.linalg.norm(Xf.T @ (Yf - Xf @ a)) / np.linalg.norm(Xf.T @ Yf)
        worst = max(worst, ratio)
        sse_bad += np.sum((Yf - Xf @ a) ** 2) > np.sum((Yf - Xf @ np.array(L_COEFS)) ** 2)
    singular = [
        (np.full((30, 4), 17), np.full(30, 17)),
        (np.zeros((10, 4)), np.arange(10)),
        (np.repeat(rng.integers(0, 256, (40, 1)), 4, axis=1), rng.integers(0, 256, 40)),
        (np.column_stack([rng.integers(0, 256, (25, 3)), np.zeros(25)]), rng.integers(0, 256, 25)),
    ]
    fallbacks = sum(fit_coefficients(RegressionSystem(X, Y)) == L_VECTOR for X, Y in singular)
    ok = worst <= 1e-6 and sse_bad == 0 and fallbacks == len(singular)
    record(6, ok, f"{full_rank} full-rank systems, worst residual ratio {worst:.2e} (limit 1e-6), "
           f"{sse_bad} worse than L; {fallbacks}/{len(singular)} singular systems fell back to L")
    assert ok


def test_criterion_7_key_separability(tmp_path):
    img = load_pgm(CORPUS / "lena.pgm")
    results = []
    for kind, use_ks in [("gap", False), ("gap", True), ("al32", True), ("al", False)]:
        K_e, K_d, K_s = make_keys(77)
        W_e, W_d, W_s = make_keys(78, nonce=K_e.nonce)
        ks = K_s if use_ks else None
        payload = np.random.default_rng(5).integers(0, 2, 50_000, dtype=np.uint8)
        path = tmp_path / f"{kind}{use_ks}.rrbe"
        save_marked(encode(img, payload, kind, 2, 4, K_e, K_d, ks), path, ks)
        # the data hider holds only K_d (+K_s), the content owner only K_e (+K_s)
        hider = load_marked(path)
        owner = load_marked(path, ks)
        good = (np.array_equal(extract(hider, K_d=K_d, K_s=ks), payload)
                and np.array_equal(recover_image(owner, K_e, ks), img))
        wrong_d = not np.array_equal(extract(hider, K_d=W_d, K_s=ks), payload)
        wrong_e = not np.array_equal(recover_image(owner, W_e, ks), img)
        wrong_s = True
        if use_ks:
            try:
                wrong_s = not np.array_equal(extract(hider, K_d=K_d, K_s=W_s), payload)
            except ValueError:
                pass
        results.append((kind, use_ks, good, wrong_d, wrong_e, wrong_s))
    ok = all(all(r[2:]) for r in results)
    record(7, ok, "; ".join(f"{k}{'+K_s' if s else ''}: own keys {'ok' if g else 'FAILED'}, wrong "
                            f"keys mismatch {d and e and w}" for k, s, g, d, e, w in results))
    assert ok
