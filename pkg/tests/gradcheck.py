"""Central finite differences of the total training loss."""

import numpy as np

from holomorph import neural_field as nf
from holomorph import trainer as tr
from holomorph.wavefield import OpticalConfig


def make_problem(seed=0, z_offset=0.0, incident_mode="field"):
    cfg = OpticalConfig(width=8, height=8, depth_slices=4, pitch_x=0.5, pitch_y=0.5,
                        z_offset=z_offset)
    rng = np.random.default_rng(seed)
    net = nf.init(seed, fourier_scale=2.0)
    for k in nf.PARAM_NAMES:
        net.params[k] = np.asarray(net.params[k] + 0.05 * rng.normal(size=np.shape(net.params[k])))
    H = rng.uniform(0.3, 0.7, size=cfg.shape)
    state = tr.init_state(H, net, cfg, 0.9, incident_mode=incident_mode)
    if incident_mode == "field":
        state.incident = state.incident * np.exp(0.3j * rng.normal(size=cfg.shape))
    return state, H, rng


def total_loss(state, H):
    fwd = tr.forward_simulate(state, keep_cache=False)
    sx, sy = state.window_slices()
    return tr.loss_data(fwd.u0, H) + state.bc_weight * tr.loss_bc(fwd.o[sx, sy])


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def check_all(state, H, rng, n_weights=10, n_incident=10, h=1e-6):
    """Return a list of (label, analytic, numeric) triples."""
    _, _, grads, _ = tr.losses_and_grads(state, H)
    out = []

    def fd_param(name, idx):
        p = np.array(state.net.params[name])
        base = p[idx]
        vals = []
        for s in (+1, -1):
            p[idx] = base + s * h
            state.net.params[name] = p
            vals.append(total_loss(state, H))
        p[idx] = base
        state.net.params[name] = p
        return (vals[0] - vals[1]) / (2 * h)

    names = [n for n in nf.PARAM_NAMES]
    for n in range(n_weights):
        name = names[n % len(names)]
        shape = np.shape(state.net.params[name])
        idx = tuple(int(rng.integers(0, s)) for s in shape)
        out.append((f"{name}{list(idx)}", float(grads[name][idx]), fd_param(name, idx)))

    phi0 = state.phi
    state.phi = phi0 + h
    lp = total_loss(state, H)
    state.phi = phi0 - h
    lm = total_loss(state, H)
    state.phi = phi0
    out.append(("phi", float(grads["phi"]), (lp - lm) / (2 * h)))

    if state.incident_mode == "field":
        inc0 = state.incident.copy()
        for _ in range(n_incident):
            j, k = (int(v) for v in rng.integers(0, 8, size=2))
            part = int(rng.integers(0, 2))
            step = h if part == 0 else 1j * h
            vals = []
            for s in (+1, -1):
                state.incident = inc0.copy()
                state.incident[j, k] += s * step
                vals.append(total_loss(state, H))
            state.incident = inc0
            out.append((f"U_N[{j},{k}].{'re' if part == 0 else 'im'}",
                        float(grads["incident"][j, k, part]), (vals[0] - vals[1]) / (2 * h)))
    else:
        c0 = state.incident.flat[0]
        for part, step in ((0, h), (1, 1j * h)):
            vals = []
            for s in (+1, -1):
                state.incident = np.full(state.config.shape, c0 + s * step)
                vals.append(total_loss(state, H))
            state.incident = np.full(state.config.shape, c0)
            out.append((f"U_N.{part}", float(grads["incident"][part]),
                        (vals[0] - vals[1]) / (2 * h)))
    return out
