import numpy as np
import pytest

from lorentzgas import pointset as ps
from lorentzgas.microdyn import (Engine, InvalidState, ParticleState,
                                 batch, first_collision, kicked_first_hits,
                                 kicked_run_batch, macroscopic_rescale,
                                 mean_free_path_check, renormalized_process,
                                 rescale_paths, run_trajectory,
                                 sample_initial_state)
from lorentzgas.microdyn.engine import _Censored
from lorentzgas.microdyn.kicked import KickedConfig


def brute_force_first_hit(config, q, v, L_max):
    """Oracle: scan every scatterer in the enclosing box of the flight."""
    r = config.radius
    lo = np.minimum(q, q + L_max * v) - (r + 1.0)
    hi = np.maximum(q, q + L_max * v) + (r + 1.0)
    pts = config.points_in_box(ps.Box(lo, hi))
    best = np.inf
    best_c = None
    for y in pts:
        b = y - q
        bv = b @ v
        disc = bv * bv - (b @ b - r * r)
        if disc <= 1e-14 * r * r:
            continue
        t = bv - np.sqrt(disc)
        if 1e-12 * r < t < best:
            best = t
            best_c = y
    return best, best_c


def test_first_collision_miss_example(z2_config):
    # r = 0.1 lattice: the vertical ray x = 0.5 clears all disks.
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.1)
    res = first_collision(cfg, ParticleState([0.5, 0.2], [0.0, 1.0]), 500.0)
    assert isinstance(res, _Censored)


def test_first_collision_hit_example():
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.1)
    t, c = first_collision(cfg, ParticleState([-0.5, 0.05], [1.0, 0.0]), 10.0)
    # quadratic ray-circle oracle: t = 0.5 - sqrt(0.1^2 - 0.05^2)
    assert np.isclose(t, 0.5 - np.sqrt(0.0075), atol=1e-12)
    assert np.allclose(c, [0.0, 0.0])
    hit = np.array([-0.5 + t, 0.05])
    w_signed = (hit - c) @ np.array([0.0, 1.0]) / 0.1
    assert np.isclose(w_signed, 0.5)


def test_start_inside_scatterer_rejected():
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.2)
    with pytest.raises(InvalidState):
        first_collision(cfg, ParticleState([0.05, 0.0], [1.0, 0.0]), 5.0)


@pytest.mark.parametrize("kind", ["z2", "oblique", "poisson", "fibonacci",
                                  "delone", "jitter"])
def test_engine_matches_brute_force(kind, rng):
    if kind == "z2":
        cfg = ps.ScattererConfig(ps.square_lattice(2), 0.08)
    elif kind == "oblique":
        cfg = ps.ScattererConfig(ps.LatticeSpec([[1.1, 0.2], [-0.1, 0.9]]),
                                 0.08)
    elif kind == "poisson":
        cfg = ps.ScattererConfig(ps.PoissonSpec(1.0, 31), 0.05)
    elif kind == "fibonacci":
        cfg = ps.ScattererConfig(ps.wennberg_spec(), 0.06)
    elif kind == "delone":
        cfg = ps.ScattererConfig(
            ps.DeloneUnionSpec(ps.square_lattice(2), [[0, 0], [0.5, 0.5]]),
            0.05)
    else:
        cfg = ps.ScattererConfig(
            ps.square_lattice(2), 0.05,
            jitter=ps.JitterSpec(amplitude=0.5, seed=3, law="ball"))
    eng = Engine(cfg)
    n_checked = 0
    for _ in range(120):
        state = sample_initial_state(cfg, ps.Box([-4, -4], [4, 4]), rng)
        res = eng.first_collision(state, 25.0)
        t_ref, c_ref = brute_force_first_hit(cfg, state.q, state.v, 25.0)
        if isinstance(res, _Censored):
            assert t_ref > 25.0 or t_ref == np.inf
        else:
            t, c = res
            assert np.isclose(t, t_ref, atol=1e-10)
            assert np.allclose(c, c_ref)
            n_checked += 1
    assert n_checked > 40


@pytest.mark.parametrize("kind", ["z2", "poisson"])
def test_compiled_first_hits_match_brute_force(kind, rng):
    if kind == "z2":
        cfg = ps.ScattererConfig(ps.square_lattice(2), 0.08)
    else:
        cfg = ps.ScattererConfig(ps.PoissonSpec(1.2, 64), 0.05)
    n = 1100
    q0 = rng.uniform(-3, 3, (n, 2))
    phi = rng.uniform(0, 2 * np.pi, n)
    v0 = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    # sanitize: launch points outside scatterers
    keep = []
    for i in range(n):
        pts = cfg.points_in_box(ps.Box(q0[i] - 0.2, q0[i] + 0.2))
        if len(pts) == 0 or np.min(np.sum((pts - q0[i]) ** 2, axis=1)) \
                > cfg.radius ** 2:
            keep.append(i)
    q0, v0 = q0[keep], v0[keep]
    ts = batch.first_hit_batch(cfg, q0, v0, 30.0)
    for i in range(len(q0)):
        t_ref, _ = brute_force_first_hit(cfg, q0[i], v0[i], 30.0)
        if np.isfinite(ts[i]):
            assert np.isclose(ts[i], t_ref, atol=1e-10)
        else:
            assert t_ref > 30.0 or not np.isfinite(t_ref)


def test_compiled_vs_reference_first_events(z2_config, smap2, rng):
    eng = Engine(z2_config)
    for _ in range(30):
        st = sample_initial_state(z2_config, ps.Box([0, 0], [3, 3]), rng)
        rec = run_trajectory(z2_config, smap2, st, n_collisions=3,
                             L_max=500.0, engine=eng)
        out = batch.run_batch(z2_config, st.q[None, :], st.v[None, :], 3,
                              500.0)
        ells = np.array([e.ell for e in rec.events])
        ws = np.array([e.w_signed for e in rec.events])
        nd = int(out["n_done"][0])
        assert nd == len(ells)
        # exact on the first event; chaos amplifies roundoff afterwards
        assert np.isclose(out["ell"][0, 0], ells[0], rtol=1e-12, atol=1e-12)
        assert np.isclose(out["w"][0, 0], ws[0], rtol=0, atol=1e-9)
        if nd >= 2:
            assert np.isclose(out["ell"][0, 1], ells[1], rtol=1e-6)


def test_single_scatterer_head_on_reversal(smap2):
    cfg = ps.ScattererConfig(ps.FinitePointsSpec([[0.0, 0.0]]), 0.3)
    rec = run_trajectory(cfg, smap2, ParticleState([-2.0, 0.0], [1.0, 0.0]),
                         n_collisions=5, L_max=50.0)
    assert len(rec.events) == 1
    ev = rec.events[0]
    assert np.allclose(ev.v_out, [-1.0, 0.0])
    assert np.isclose(ev.ell, 2.0 - 0.3)
    assert rec.termination == "censored"


def test_exit_point_on_sphere(smap2, rng):
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.1)
    eng = Engine(cfg)
    st = sample_initial_state(cfg, ps.Box([0, 0], [2, 2]), rng)
    rec = run_trajectory(cfg, smap2, st, n_collisions=6, L_max=500.0,
                         engine=eng)
    q = st.q.copy()
    for ev in rec.events:
        # q-continuity: event position = previous exit + ell * v_in
        hit = q + ev.ell * ev.v_in
        assert np.isclose(np.linalg.norm(hit - ev.center), 0.1, atol=1e-9)
        q = ev.center + 0.1 * (ev.s_vec + np.sqrt(1 - ev.s_vec @ ev.s_vec)
                               * ev.v_out)


def test_time_reversal_retrace(smap2, rng):
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.15)
    eng = Engine(cfg)
    st = sample_initial_state(cfg, ps.Box([0, 0], [2, 2]), rng)
    rec = run_trajectory(cfg, smap2, st, n_collisions=6, L_max=500.0,
                         engine=eng)
    assert len(rec.events) == 6
    last = rec.events[-1]
    # restart from the midpoint of the final outgoing flight, reversed
    mid = (last.center + 0.15 * (last.s_vec
                                 + np.sqrt(1 - last.s_vec @ last.s_vec)
                                 * last.v_out)) + 0.5 * last.v_out
    back = run_trajectory(cfg, smap2,
                          ParticleState(mid, -last.v_out),
                          n_collisions=6, L_max=500.0, engine=eng)
    fw_centers = [tuple(np.round(e.center, 9)) for e in rec.events]
    bk_centers = [tuple(np.round(e.center, 9)) for e in back.events]
    assert bk_centers == fw_centers[::-1]


def test_speed_conservation_long_run(rng):
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.05)
    q0 = rng.random((1, 2))
    phi = rng.uniform(0, 2 * np.pi)
    v0 = np.array([[np.cos(phi), np.sin(phi)]])
    out = batch.run_batch(cfg, q0, v0, 10_000, 1e6)
    v = np.stack([out["vx"][0], out["vy"][0]], axis=1)
    v = v[np.isfinite(v[:, 0])]
    assert len(v) == 10_000
    assert np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) < 1e-9


def test_poisson_collision_rate(rng):
    # collisions in microscopic time T have mean ~ T nbar sigma_bar r
    cfg = ps.ScattererConfig(ps.PoissonSpec(1.0, 5150), 0.02)
    n = 400
    q0 = rng.uniform(0, 200, (n, 2))
    phi = rng.uniform(0, 2 * np.pi, n)
    v0 = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    out = batch.run_batch(cfg, q0, v0, 60, 1e5, store_extra=False)
    T = 500.0
    t_cum = np.nancumsum(out["ell"], axis=1)
    n_within = (t_cum <= T).sum(axis=1)
    expect = T * 1.0 * 2.0 * 0.02
    assert abs(n_within.mean() - expect) < 4 * n_within.std() / np.sqrt(n)


def test_trajectory_determinism(z2_config, smap2):
    st = ParticleState([0.31, 0.47], [0.6, 0.8])
    rec1 = run_trajectory(z2_config, smap2, st, n_collisions=10, L_max=1e4)
    rec2 = run_trajectory(z2_config, smap2, st, n_collisions=10, L_max=1e4)
    assert [e.ell for e in rec1.events] == [e.ell for e in rec2.events]


def test_censoring_and_stop_criteria(smap2):
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.01)
    st = ParticleState([0.5, 0.31], [1.0, 0.0])
    rec = run_trajectory(cfg, smap2, st, n_collisions=50, L_max=5.0)
    assert rec.termination == "censored"
    rec2 = run_trajectory(cfg, smap2, st, time_max=200.0, L_max=1e5)
    assert rec2.termination in ("time", "censored")
    if rec2.termination == "time":
        assert rec2.events[-1].t <= 200.0


def test_macroscopic_rescale(smap2):
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.1)
    rec = run_trajectory(cfg, smap2, ParticleState([0.5, 0.33], [1.0, 0.0]),
                         n_collisions=5, L_max=1e4)
    scaled = macroscopic_rescale(rec)
    for e_raw, e_mac in zip(rec.events, scaled.events):
        assert np.isclose(e_mac.ell, 0.1 * e_raw.ell)
        assert np.isclose(e_mac.t, 0.1 * e_raw.t)
        assert np.array_equal(e_mac.v_out, e_raw.v_out)
    assert np.isclose(rescale_paths(np.array([1.0 / 0.1]), 0.1, 2)[0], 1.0)


# --- renormalized process ----------------------------------------------------

def test_theta_contains_image_of_anchor():
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.01)
    view = renormalized_process(cfg, [0.0, 0.0], 0.3, 0.05)
    pts = view.points_in_box(ps.Box([-0.1, -0.4], [0.1, -0.2]))
    # anchor maps to -(0, w') = (0, -0.3)
    assert any(np.allclose(p, [0.0, -0.3], atol=1e-12) for p in pts)


def test_theta_stretch_action():
    # single distant point on the axis, backscattering frame (w' = 0):
    # (ell, u) -> (-ell r, -u/r)
    r = 0.05
    src = ps.FinitePointsSpec([[0.0, 0.0], [40.0, 0.002]])
    cfg = ps.ScattererConfig(src, 0.01)
    view = renormalized_process(cfg, [0.0, 0.0], 0.0, r)
    pts = view.points_in_box(ps.Box([-2.1, -0.1], [-1.9, 0.0]))
    assert len(pts) == 1
    assert np.allclose(pts[0], [-40.0 * r, -0.002 / r], atol=1e-12)


def test_theta_lattice_fast_path_matches_generic():
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.01)
    box = ps.Box([0.05, -1.0], [2.05, 1.0])
    for wp in (0.3, -0.7, 0.0):
        view = renormalized_process(cfg, [0.0, 0.0], wp, 0.02)
        fast = view.points_in_box(box)
        # generic pullback: enumerate a covering box and transform
        poly = view._preimage_polygon(box)
        lo = poly.min(axis=0) - 1e-9
        hi = poly.max(axis=0) + 1e-9
        pts = cfg.points_in_box(ps.Box(lo, hi))
        img = (pts - view.y) @ view.fwd - view.offset
        img = img[box.contains(img)]
        assert len(fast) == len(img)
        assert np.allclose(fast, ps._lexsort(img), atol=1e-9)


def test_theta_kicked_shear_variant():
    # kicked frame: the shear [[1, dW(w')], [0, 1]] replaces the rotation
    from lorentzgas.scatter import linear_kick
    pot = linear_kick(1.0, 1)
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.01, geometry="sphere")
    r = 0.05
    wp = 0.3
    view = renormalized_process(cfg, [0.0, 0.0], wp, r, smap=pot)
    assert np.allclose(view.S, [[1.0, 0.3], [0.0, 1.0]])
    # anchor image and measure preservation of the map
    pts = view.points_in_box(ps.Box([-0.01, -0.31], [0.01, -0.29]))
    assert any(np.allclose(p, [0.0, -wp], atol=1e-12) for p in pts)
    assert np.isclose(abs(np.linalg.det(view.fwd)), 1.0)
    with pytest.raises(ps.ConfigError):
        renormalized_process(cfg, [0.0, 0.0], 0.9, r, smap=pot)


def test_theta_generic_source_branch():
    # non-lattice, non-Poisson sources go through the bounding-box pullback
    cfg = ps.ScattererConfig(ps.wennberg_spec(), 0.05)
    view = renormalized_process(cfg, [0.0, 0.0], 0.4, 0.2)
    box = ps.Box([0.05, -1.0], [1.5, 1.0])
    pts = view.points_in_box(box)
    # cross-check against a transform of the raw enumeration
    poly = view._preimage_polygon(box)
    raw = cfg.points_in_box(ps.Box(poly.min(axis=0) - 1e-9,
                                   poly.max(axis=0) + 1e-9))
    img = (raw - view.y) @ view.fwd - view.offset
    img = img[box.contains(img)]
    assert len(pts) == len(img)


def test_theta_poisson_counts_r_invariant():
    box = ps.Box([0.2, -0.8], [1.2, 0.8])
    means = []
    for r in (0.1, 0.02):
        counts = []
        for i in range(400):
            cfg = ps.ScattererConfig(ps.PoissonSpec(1.0, 900 + i), 0.01)
            view = renormalized_process(cfg, [0.0, 0.0], 0.25, r)
            counts.append(view.count_in_box(box))
        means.append(np.mean(counts))
    vol = box.volume
    se = np.sqrt(vol / 400)
    assert abs(means[0] - vol) < 3.5 * se
    assert abs(means[1] - vol) < 3.5 * se
    assert abs(means[0] - means[1]) < 4 * se * np.sqrt(2)


# --- kicked -------------------------------------------------------------------

def test_kicked_slab_first_hit_example():
    # launch at time 0.3 between kicks, on the axis: first kick at t=1,
    # slab test |0 - 0| < r/2 passes -> collision after 0.7.
    kc = KickedConfig(radius=0.1)
    t, j = kicked_first_hits(kc, np.array([0.3]), np.array([0.0]),
                             np.array([0.0]), np.array([10.0]))
    assert np.isclose(t[0], 0.7)
    assert j[0] == 0.0


def test_kicked_trajectory_taus_are_integer_multiples():
    kc = KickedConfig(radius=0.05)
    out = kicked_run_batch(kc, np.array([0.2, 7.4]), 0.618, 5,
                           max_kicks=200_000)
    tau = out["tau"][np.isfinite(out["tau"])]
    assert np.allclose(tau, np.round(tau))
    assert out["phat0"] == 1.0


def test_kicked_kick_updates_momentum():
    kc = KickedConfig(radius=0.2, kappa=1.0)
    out = kicked_run_batch(kc, np.array([0.05]), 0.0, 1, max_kicks=10)
    # first kick at t=1: transverse stays 0.05, w = 0.05/0.2 = 0.25
    assert np.isclose(out["tau"][0, 0], 1.0)
    assert np.isclose(out["w"][0, 0], 0.25)
    assert np.isclose(out["p"][0, 0], -0.25)


def test_kicked_mean_collision_time_quick():
    from lorentzgas.microdyn import kicked_mean_collision_time_check
    kc = KickedConfig(radius=0.05)
    out = kicked_mean_collision_time_check(kc, 0.7071067811865476, L=4000,
                                           n_launches=20_000, seed=5)
    assert abs(out["mean"] / out["target"] - 1) < 0.03


# --- launch-measure mean free path -------------------------------------------

def test_reference_engine_d3(rng):
    # the reference engine and scattering are dimension-generic
    from lorentzgas.scatter import LorentzScatteringMap, specular_angle
    cfg = ps.ScattererConfig(ps.square_lattice(3), 0.2)
    smap = LorentzScatteringMap(3, specular_angle())
    eng = Engine(cfg)
    n_hits = 0
    for _ in range(25):
        st = sample_initial_state(cfg, ps.Box([0, 0, 0], [2, 2, 2]), rng)
        res = eng.first_collision(st, 40.0)
        t_ref, c_ref = brute_force_first_hit(cfg, st.q, st.v, 40.0)
        if not isinstance(res, _Censored):
            t, c = res
            assert np.isclose(t, t_ref, atol=1e-10)
            assert np.allclose(c, c_ref)
            n_hits += 1
    assert n_hits > 10
    st = sample_initial_state(cfg, ps.Box([0, 0, 0], [2, 2, 2]), rng)
    rec = run_trajectory(cfg, smap, st, n_collisions=8, L_max=1e4,
                         engine=eng)
    assert len(rec.events) == 8
    for ev in rec.events:
        assert np.isclose(np.linalg.norm(ev.v_out), 1.0, atol=1e-12)
        assert np.isclose(np.linalg.norm(ev.s_vec),
                          np.linalg.norm(ev.w_vec), atol=1e-12)


def test_mfp_small_scale_both_domains():
    cfg = ps.ScattererConfig(ps.square_lattice(2), 0.02)
    ball = mean_free_path_check(cfg, T=2500.0, n_launches=30_000, seed=8,
                                domain="ball")
    square = mean_free_path_check(cfg, T=2000.0, n_launches=30_000, seed=9,
                                  domain="square")
    assert abs(ball["mean"] / ball["target"] - 1) < 0.02
    assert abs(square["mean"] / square["target"] - 1) < 0.02
    joint_se = np.hypot(ball["stderr"], square["stderr"])
    assert abs(ball["mean"] - square["mean"]) < 4 * joint_se \
        + 0.01 * ball["target"]
