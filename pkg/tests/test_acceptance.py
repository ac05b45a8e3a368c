"""End-to-end acceptance checks for the whole toolkit.

Each test prints one summary line of the form

    ACCEPTANCE <name>: PASS|FAIL (<measured numbers>)

before its assertions run, so the measurements are on record even when a
check is red. The heavy fixtures (the 129^3 and 61^3 test-field stores)
are built once per module and shared across tests.
"""

import threading
import time
import warnings

import numpy as np
import pytest

from splinecast import (
    bspline,
    downsample,
    encoder,
    metrics,
    model,
    partition,
    render,
    runtime,
    store,
    volume,
)
from splinecast.errors import CapacityError
from splinecast.partition import BlockAddress

ML_FIELD = volume.marschner_lobb()
ML_BOUND = 1e-3
ENCODE129 = dict(levels=3, micro_dims=33, degree=2, error_bound=ML_BOUND, coarsest=1)


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)


def _diag_pov() -> render.PointOfView:
    """Three-quarter view of the domain, looking at the origin."""
    pos = (2.0, 1.6, 2.6)
    return render.PointOfView(
        position=pos, direction=tuple(-c for c in pos), up=(0.0, 1.0, 0.0)
    )


# ---------------------------------------------------------------------------
# Shared stores


@pytest.fixture(scope="module")
def ml129():
    return volume.sample_grid(ML_FIELD, (129, 129, 129))


@pytest.fixture(scope="module")
def stores129(ml129):
    out = {}
    for mode in ("adaptive", "exhaustive", "fixed:33"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            manifest, models, stats = encoder.encode_volume(
                ml129, mode=mode, **ENCODE129
            )
        out[mode] = {
            "manifest": manifest,
            "models": models,
            "stats": stats,
            "warnings": [str(w.message) for w in caught],
        }
    return out


@pytest.fixture(scope="module")
def blocks129(ml129):
    _, blocks = partition.build_hierarchy(
        ml129, ENCODE129["levels"], ENCODE129["micro_dims"], coarsest=ENCODE129["coarsest"]
    )
    return blocks


@pytest.fixture(scope="module")
def disk129(stores129, tmp_path_factory):
    root = tmp_path_factory.mktemp("ml129-store")
    store.write_store(root, stores129["adaptive"]["manifest"], stores129["adaptive"]["models"])
    return root


@pytest.fixture(scope="module")
def ml61():
    return volume.sample_grid(ML_FIELD, (61, 61, 61))


@pytest.fixture(scope="module")
def stores61(ml61):
    """Storage-matched octant stores of the 61^3 test volume.

    The spline store fixes 16 control points per axis (132808 bytes); the
    downsampled comparison store keeps every second sample plus a ghost
    layer (186752 bytes), so the spline store is the smaller of the two.
    The full-resolution ghosted store feeds the ghost accounting check.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mfa_man, mfa, _ = encoder.encode_volume(
            ml61, 1, 31, degree=2, error_bound=ML_BOUND, coarsest=2, mode="fixed:16"
        )
    ds16_man, ds16 = downsample.build_ds_store(ml61, 1, 16, coarsest=2, ghost=1)
    full_man, full = downsample.build_ds_store(ml61, 1, 31, coarsest=2, ghost=1)
    return {
        "mfa16": (mfa_man, mfa),
        "ds16_ghost": (ds16_man, ds16),
        "ds_full_ghost": (full_man, full),
    }


def _smooth_field() -> volume.AnalyticField:
    """A low-frequency field the 61^3 grid resolves comfortably."""

    def value(x, y, z):
        return 0.5 + 0.5 * np.sin(2.5 * x) * np.sin(2.5 * y) * np.sin(2.5 * z)

    def gradient(x, y, z):
        return (
            1.25 * np.cos(2.5 * x) * np.sin(2.5 * y) * np.sin(2.5 * z),
            1.25 * np.sin(2.5 * x) * np.cos(2.5 * y) * np.sin(2.5 * z),
            1.25 * np.sin(2.5 * x) * np.sin(2.5 * y) * np.cos(2.5 * z),
        )

    return volume.AnalyticField(value, gradient, np.array(((0.0, 7.0),) * 3))


@pytest.fixture(scope="module")
def smooth61():
    """Octant and single-block stores of a well-resolved smooth field.

    Both spline encodes meet a 1e-4 bound here, so any 8-block vs 1-block
    frame difference is a partition artifact rather than fitting noise.
    """
    vol = volume.sample_grid(_smooth_field(), (61, 61, 61))
    man8, mfa8, _ = encoder.encode_volume(vol, 1, 31, degree=2, error_bound=1e-4, coarsest=2)
    man1, mfa1, _ = encoder.encode_volume(vol, 1, 61, degree=2, error_bound=1e-4, coarsest=1)
    ds8p_man, ds8p = downsample.build_ds_store(vol, 1, 31, coarsest=2, ghost=0)
    ds8g_man, ds8g = downsample.build_ds_store(vol, 1, 31, coarsest=2, ghost=1)
    ds1_man, ds1 = downsample.build_ds_store(vol, 1, 61, coarsest=1, ghost=0)
    return {
        "mfa8": (man8, mfa8),
        "mfa1": (man1, mfa1),
        "ds8_plain": (ds8p_man, ds8p),
        "ds8_ghost": (ds8g_man, ds8g),
        "ds1": (ds1_man, ds1),
    }


@pytest.fixture(scope="module")
def replay129(stores129, disk129):
    manifest = stores129["adaptive"]["manifest"]
    params = render.RenderParams(width=32, height=32, sample_distance=0.02)
    tf = render.TransferFunction.ml_preset()
    trajectory = runtime.orbit_trajectory(100, radius=1.3)
    vis_sets = [
        set(render.select_visible(p, manifest, params.aspect)) for p in trajectory
    ]
    union = set().union(*vis_sets)
    capacity = max(len(s) for s in vis_sets) + 8
    runs = {}
    for mode in ("off", "linear"):
        cache = runtime.ModelCache(capacity, runtime.make_loader(disk129, manifest))
        timings, _, aggregate = runtime.replay(
            trajectory, manifest, cache, tf, params, prefetch=mode, keep_frames=False
        )
        runs[mode] = {
            "timings": timings,
            "aggregate": aggregate,
            "counters": cache.counters(),
        }
    return {
        "runs": runs,
        "capacity": capacity,
        "union_size": len(union),
        "max_visible": max(len(s) for s in vis_sets),
        "trajectory": trajectory,
        "manifest": manifest,
        "params": params,
    }


# ---------------------------------------------------------------------------
# 1. Serialized size is exact and the round trip is bit-identical


def test_format_exactness():
    rng = np.random.default_rng(20260816)
    t0 = time.perf_counter()
    checked = 0
    for degree in (1, 2, 3):
        for ncp in range(degree + 1, 17):
            knots = np.stack([bspline.clamped_knots(ncp, degree)] * 3)
            control = rng.standard_normal((ncp, ncp, ncp)).astype(np.float32)
            m = model.MicroModel(
                degree=degree, knots=knots, control=control,
                extent=((0.0, 1.0),) * 3, lod=1,
            )
            data = model.serialize(m)
            expected = 1 + ((ncp + degree) * 3 + ncp**3) * 4
            assert len(data) == expected
            assert model.serialized_size(ncp, degree) == expected
            m2 = model.deserialize(data, ncp, ((0.0, 1.0),) * 3, 1)
            assert model.serialize(m2) == data
            assert m2.degree == degree
            assert np.array_equal(m2.control, m.control)
            assert np.array_equal(m2.knots, m.knots)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = elapsed < 1.0
    _report("format-exactness", ok, f"{checked} layouts round-tripped in {elapsed * 1e3:.1f} ms")
    assert ok


# ---------------------------------------------------------------------------
# 2. A degree-2 fit reproduces any trivariate quadratic


def test_polynomial_reproduction():
    rng = np.random.default_rng(42)
    c = rng.uniform(-1.0, 1.0, 10)

    def q(x, y, z):
        return (
            c[0] + c[1] * x + c[2] * y + c[3] * z
            + c[4] * x * x + c[5] * y * y + c[6] * z * z
            + c[7] * x * y + c[8] * x * z + c[9] * y * z
        )

    def qgrad(x, y, z):
        gx = c[1] + 2 * c[4] * x + c[7] * y + c[8] * z
        gy = c[2] + 2 * c[5] * y + c[7] * x + c[9] * z
        gz = c[3] + 2 * c[6] * z + c[8] * x + c[9] * y
        return gx, gy, gz

    field = volume.AnalyticField(q, qgrad, np.array(((0.0, 1.0),) * 3))
    vol = volume.sample_grid(field, (17, 17, 17))
    result = encoder.in_level_search(vol.samples, 1e-5, 2)

    decoded = result.model.decode_grid((17, 17, 17))
    rmse = float(np.sqrt(np.mean((decoded - np.asarray(vol.samples, np.float64)) ** 2)))

    pts = rng.uniform(0.05, 0.95, (200, 3))
    g_pred = result.model.gradients_at(pts)
    g_true = np.stack(qgrad(pts[:, 0], pts[:, 1], pts[:, 2]), axis=-1)
    mag = np.maximum(np.linalg.norm(g_true, axis=1), 1e-9)
    rel = float(np.max(np.linalg.norm(g_pred - g_true, axis=1) / mag))

    ok = rmse < 1e-5 and rel < 1e-3
    _report(
        "polynomial-reproduction",
        ok,
        f"ncp*={result.ncp_star}, decode rmse={rmse:.2e}, max rel gradient err={rel:.2e}",
    )
    assert result.met_bound
    assert rmse < 1e-5
    assert rel < 1e-3


# ---------------------------------------------------------------------------
# 3. Adaptive search equals the exhaustive oracle where it searches,
#    meets the bound (or warns), and prunes part of the hierarchy


def test_adaptive_matches_exhaustive_search(stores129, blocks129):
    adaptive = stores129["adaptive"]
    exhaustive = stores129["exhaustive"]
    man_ex = exhaustive["manifest"]

    identical = 0
    for addr in man_ex.addresses():
        searched = addr.lod == man_ex.levels or man_ex.entries[addr.parent()].is_complex
        if not searched:
            continue
        a = model.serialize(adaptive["models"][addr])
        b = model.serialize(exhaustive["models"][addr])
        assert a == b, f"adaptive and exhaustive bytes differ at {addr.key}"
        identical += 1

    unmet = set(adaptive["stats"].unmet_blocks)
    warned_keys = {msg.split(":", 1)[0] for msg in adaptive["warnings"]}
    over_without_warning = []
    for addr, blk in blocks129.items():
        rmse = encoder.error_rmse(blk.samples, adaptive["models"][addr])
        if rmse > ML_BOUND and addr.key not in unmet:
            over_without_warning.append((addr.key, rmse))

    stats = adaptive["stats"]
    pruned = stats.searched_blocks < stats.total_blocks
    ok = pruned and not over_without_warning and unmet <= warned_keys
    _report(
        "adaptive-equals-exhaustive",
        ok,
        f"byte-identical={identical}, unmet-but-warned={len(unmet)}, "
        f"over-bound-silent={len(over_without_warning)}, "
        f"searched={stats.searched_blocks}/{stats.total_blocks}",
    )
    assert not over_without_warning
    assert unmet <= warned_keys
    # At this grid resolution the test field oscillates near the sampling
    # limit, so every block's refinement profile reports detail everywhere
    # and the search prunes nothing. The claim below states the intended
    # pruning behavior and fails on this input; the printed line above
    # records the measured counts.
    assert stats.searched_blocks < stats.total_blocks


# ---------------------------------------------------------------------------
# 4. Adaptive control-point counts compress the store


def test_adaptive_compression_ratio(stores129):
    adaptive_bytes = sum(m.nbytes for m in stores129["adaptive"]["models"].values())
    fixed_bytes = sum(m.nbytes for m in stores129["fixed:33"]["models"].values())
    ratio = fixed_bytes / adaptive_bytes
    ok = ratio >= 2.0
    _report(
        "compression-ratio",
        ok,
        f"adaptive={adaptive_bytes} B, fixed-max={fixed_bytes} B, ratio={ratio:.3f}",
    )
    # With every block near its interpolation limit (see the previous test)
    # the adaptive store ends up almost as large as the fixed-size one, so
    # this ratio check fails on this input; the printed line above records
    # the measured sizes.
    assert ratio >= 2.0


# ---------------------------------------------------------------------------
# 5. Spline frames beat downsampled frames at equal-or-smaller storage


def test_quality_beats_downsampling_at_equal_storage(stores61):
    mfa_man, mfa_models = stores61["mfa16"]
    ds_man, ds_blocks = stores61["ds16_ghost"]
    mfa_bytes = sum(m.nbytes for m in mfa_models.values())
    ds_bytes = sum(len(downsample.serialize_ds(b)) for b in ds_blocks.values())

    pov = _diag_pov()
    tf = render.TransferFunction.ml_preset()
    rows = []
    for sd in (0.02, 0.01, 0.005):
        params = render.RenderParams(width=64, height=64, sample_distance=sd)
        gt = render.render_ground_truth(pov, ML_FIELD, tf, params)
        fm = render.render(pov, mfa_models, tf, params)
        fd = render.render(pov, ds_blocks, tf, params)
        rows.append(
            (
                sd,
                metrics.psnr(fm, gt),
                metrics.psnr(fd, gt),
                metrics.ssim(fm, gt),
                metrics.ssim(fd, gt),
            )
        )

    ok = mfa_bytes <= ds_bytes and all(
        pm > pd and sm > sd_ for _, pm, pd, sm, sd_ in rows
    )
    detail = f"spline={mfa_bytes} B <= downsampled={ds_bytes} B; " + "; ".join(
        f"sd={sd:g}: psnr {pm:.2f} vs {pd:.2f}, ssim {sm:.4f} vs {sd_:.4f}"
        for sd, pm, pd, sm, sd_ in rows
    )
    _report("quality-vs-downsampling", ok, detail)
    assert mfa_bytes <= ds_bytes
    for sd, pm, pd, sm, sd_ in rows:
        assert pm > pd, f"psnr not higher at sample distance {sd}"
        assert sm > sd_, f"ssim not higher at sample distance {sd}"


# ---------------------------------------------------------------------------
# 6. Block boundaries: spline blocks stay smoother than ghost-free
#    downsampled blocks, and ghost samples remove the artifact entirely


def test_block_boundary_artifacts(smooth61):
    pov = _diag_pov()
    tf = render.TransferFunction.ml_preset()
    params = render.RenderParams(width=128, height=128, sample_distance=0.005)

    def rgb_dev(a: render.Frame, b: render.Frame) -> int:
        return int(
            np.max(np.abs(a.rgba[..., :3].astype(int) - b.rgba[..., :3].astype(int)))
        )

    f_m8 = render.render(pov, smooth61["mfa8"][1], tf, params)
    f_m1 = render.render(pov, smooth61["mfa1"][1], tf, params)
    f_d8 = render.render(pov, smooth61["ds8_plain"][1], tf, params)
    f_d1 = render.render(pov, smooth61["ds1"][1], tf, params)
    dev_mfa = rgb_dev(f_m8, f_m1)
    dev_ds = rgb_dev(f_d8, f_d1)

    # Value agreement of ghosted blocks on the shared octant planes, which
    # coincide with sample planes of the 61^3 grid.
    ghost_man, ghost_blocks = smooth61["ds8_ghost"]
    single = smooth61["ds1"][1][BlockAddress(1, (0, 0, 0))]
    rng = np.random.default_rng(3)
    worst = 0.0
    for axis in range(3):
        pts = rng.uniform(-0.999, 0.999, (400, 3))
        pts[:, axis] = 0.0
        reference = single.values_at(pts)
        for addr, entry in ghost_man.entries.items():
            lo = entry.extent[:, 0] - 1e-9
            hi = entry.extent[:, 1] + 1e-9
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            if not np.any(inside):
                continue
            got = ghost_blocks[addr].values_at(pts[inside])
            worst = max(worst, float(np.max(np.abs(got - reference[inside]))))

    ok = dev_mfa < dev_ds and worst < 1e-6
    _report(
        "block-boundary-artifacts",
        ok,
        f"8-vs-1 block shaded deviation: spline={dev_mfa}/255, "
        f"downsampled-no-ghost={dev_ds}/255; ghosted boundary value dev={worst:.2e}",
    )
    assert dev_mfa < dev_ds
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# 7. Ghost sample accounting


def test_ghost_overhead_accounting(stores61):
    predicted = volume.ghost_overhead(16, 4)
    _, ghost_blocks = stores61["ds_full_ghost"]
    actual_bytes = sum(len(downsample.serialize_ds(b)) for b in ghost_blocks.values())

    # 61 samples per axis, 2 blocks of 31 per axis, 1 ghost layer: every
    # block stores 33 samples per axis. Sharing one boundary sample per
    # interior face predicts 61 + 2 per axis; clamp-padding at the volume
    # edges adds the remaining 3.
    naive_axis = 61 + 2
    clamp_correction = 3
    stored_axis = 2 * (31 + 2)
    header = downsample.DS_HEADER_BYTES
    expected_bytes = 8 * (header + 4 * 33**3)

    ok = (
        predicted == 1.953125
        and stored_axis == naive_axis + clamp_correction
        and actual_bytes == expected_bytes
    )
    _report(
        "ghost-overhead",
        ok,
        f"ghost_overhead(16,4)={predicted}, stored axis {stored_axis} = "
        f"{naive_axis}+{clamp_correction}, store bytes {actual_bytes} "
        f"(expected {expected_bytes})",
    )
    assert predicted == 1.953125
    assert stored_axis == naive_axis + clamp_correction
    assert actual_bytes == expected_bytes


# ---------------------------------------------------------------------------
# 8. Cache semantics: capacity errors, warm repeats, exact LRU order


class _ReferenceLRU:
    """Independent list-based LRU used as the eviction oracle."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.order = []  # least recently used first
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def access(self, key):
        if key in self.order:
            self.hits += 1
            self.order.remove(key)
        else:
            self.misses += 1
            if len(self.order) == self.capacity:
                self.order.pop(0)
                self.evictions += 1
        self.order.append(key)


def test_cache_semantics(stores129, disk129):
    manifest = stores129["adaptive"]["manifest"]
    loader = runtime.make_loader(disk129, manifest)
    pov = render.PointOfView(
        position=(0.5, 0.4, 1.1), direction=(-0.5, -0.4, -1.1), up=(0.0, 1.0, 0.0)
    )
    visible = render.select_visible(pov, manifest)
    assert len(visible) >= 2

    too_small = runtime.ModelCache(len(visible) - 1, loader)
    with pytest.raises(CapacityError):
        runtime.cache_frame(pov, manifest, too_small)

    fits = runtime.ModelCache(len(visible), loader)
    runtime.cache_frame(pov, manifest, fits)
    first = fits.counters()
    runtime.cache_frame(pov, manifest, fits)
    second = fits.counters()
    repeat_misses = second["misses"] - first["misses"]
    repeat_hits = second["hits"] - first["hits"]

    addrs = manifest.addresses()
    ref = _ReferenceLRU(16)
    cache = runtime.ModelCache(16, loader)
    rng = np.random.default_rng(2026)
    for idx in rng.integers(0, len(addrs), 10_000):
        addr = addrs[int(idx)]
        cache.fetch(addr)
        ref.access(addr)
    counters = cache.counters()
    lru_ok = (
        cache.resident_addresses() == ref.order
        and counters["hits"] == ref.hits
        and counters["misses"] == ref.misses
        and counters["evictions"] == ref.evictions
    )

    ok = repeat_misses == 0 and repeat_hits == len(visible) and lru_ok
    _report(
        "cache-semantics",
        ok,
        f"undersized cache raised, warm repeat misses={repeat_misses}, "
        f"10000 accesses: hits={counters['hits']} misses={counters['misses']} "
        f"evictions={counters['evictions']} match reference={lru_ok}",
    )
    assert repeat_misses == 0
    assert repeat_hits == len(visible)
    assert lru_ok


# ---------------------------------------------------------------------------
# 9. Prefetching lowers the aggregate miss rate and never outlives rendering


def test_prefetch_lowers_miss_rate_and_preempts(replay129, disk129):
    assert replay129["capacity"] < replay129["union_size"], (
        "capacity must sit below the union working set for this check"
    )
    off = replay129["runs"]["off"]["counters"]
    lin = replay129["runs"]["linear"]["counters"]
    off_rate = off["misses"] / (off["hits"] + off["misses"])
    lin_rate = lin["misses"] / (lin["hits"] + lin["misses"])
    prefetched = sum(
        t.prefetch_models_loaded for t in replay129["runs"]["linear"]["timings"]
    )

    manifest = replay129["manifest"]
    trajectory = replay129["trajectory"]
    done = threading.Event()
    events = []

    def hook(addr, reason):
        events.append((addr.key, reason))
        done.set()  # rendering finishes while the first prefetch load runs

    cache = runtime.ModelCache(
        replay129["capacity"], runtime.make_loader(disk129, manifest), on_load=hook
    )
    loaded = runtime.prefetch_loop(
        trajectory[:2], manifest, cache, done, runtime.predict_next_linear, 1.0
    )
    after_done = runtime.prefetch_loop(
        trajectory[:3], manifest, cache, done, runtime.predict_next_linear, 1.0
    )

    ok = (
        lin_rate < off_rate
        and loaded == 1
        and len(events) == 1
        and events[0][1] == "prefetch"
        and after_done == 0
    )
    _report(
        "prefetch-benefit",
        ok,
        f"miss rate off={off_rate:.4f} vs linear={lin_rate:.4f} "
        f"(prefetched {prefetched} blocks, capacity {replay129['capacity']} < "
        f"union {replay129['union_size']}); loads after render done: "
        f"{loaded - 1 + after_done}",
    )
    assert lin_rate < off_rate
    assert loaded == 1 and len(events) == 1 and events[0][1] == "prefetch"
    assert after_done == 0


# ---------------------------------------------------------------------------
# 10. Input latency is the sum of its two stages


def test_input_latency_identity(replay129):
    worst = 0.0
    frames = 0
    for run in replay129["runs"].values():
        for t in run["timings"]:
            worst = max(
                worst, abs(t.input_latency_ms - (t.caching_ms + t.rendering_ms))
            )
            frames += 1
    ok = worst <= 1.0
    _report(
        "latency-identity", ok, f"{frames} frames, worst deviation {worst:.4f} ms"
    )
    assert ok


# ---------------------------------------------------------------------------
# 11. Early ray termination changes frames by at most the cutoff


def test_early_termination_vs_exhaustive_march(stores61):
    _, mfa_models = stores61["mfa16"]
    tf = render.TransferFunction(
        color_points=[[0.0, 0.9, 0.7, 0.3], [1.0, 0.9, 0.7, 0.3]],
        opacity_points=[[0.0, 0.0], [0.25, 0.85], [1.0, 0.85]],
    )
    pov = render.PointOfView(
        position=(0.0, 0.0, 2.6), direction=(0.0, 0.0, -1.0), up=(0.0, 1.0, 0.0)
    )
    kwargs = dict(width=48, height=48, sample_distance=0.005)
    early = render.render(pov, mfa_models, tf, render.RenderParams(o_max=0.99, **kwargs))
    full = render.render(pov, mfa_models, tf, render.RenderParams(o_max=1.0, **kwargs))

    assert int(full.rgba[..., 3].max()) == 255, "test scene must saturate opacity"
    worst = int(np.max(np.abs(early.rgba.astype(int) - full.rgba.astype(int))))
    allowed = (0.01 + 1.0 / 255.0) * 255.0
    ok = worst <= allowed
    _report(
        "early-termination",
        ok,
        f"max per-channel deviation {worst}/255, allowed {allowed:.2f}/255",
    )
    assert worst <= allowed
