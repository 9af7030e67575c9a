"""Nonconvex run on rippled quadratics with a randomly drawn output iterate.

Runs the unconstrained schedule with beta = 0.4, then checks the
(eps, delta)-stationarity certificate implied by the rate bounds and
prints how the exact gradient norm and the p-side gap evolve.

    python demos/nonconvex_certificate.py
"""

import math

import numpy as np

from minimax_meta import FeasibleSet, NoiseModel, RunConfig, run_da_maml, trig_suite
from minimax_meta.diagnostics import phi, stationarity_certificate, unconstrained_rate_bounds
from minimax_meta.tasks import suite_constants

ALPHA, BETA, T = 0.05, 0.4, 20_000


def main():
    tasks = trig_suite(4, 5, FeasibleSet.everywhere(5), seed=3, offset_scale=0.5,
                       noise=NoiseModel(0.5, 1.0, 0.2), region=FeasibleSet.ball(1.5, dim=5),
                       c=[50.0, 0.0, 0.0, 0.0])
    cfg = RunConfig(ALPHA, T, regime="nonconvex-unconstrained", beta=BETA, seed=0,
                    record_every=T // 10)
    out = run_da_maml(cfg, tasks)
    for r in out.trace:
        print(f"t = {r.t:>6}: |grad| {r.grad_norm_exact:.4f}  p-gap {r.p_gap:.4f}  "
              f"worst {r.worst_loss:.3f}")
    rep, ci = out.constants, suite_constants(tasks)
    phi1 = phi(np.zeros(5), np.full(4, 0.25), tasks, ALPHA)
    g2, dp = unconstrained_rate_bounds(phi1, ci.B, ci.m, rep.G_p, rep.M_tilde, rep.sigma_w2,
                                       BETA, T)
    cert = stationarity_certificate(out.w_out, out.p_out, tasks, ALPHA, math.sqrt(g2), dp)
    print(f"output iterate tau = {out.tau}, weights {np.round(out.p_out, 3)}")
    print(f"certificate eps = {math.sqrt(g2):.3g}, delta = {dp:.3g}: holds = {cert.holds} "
          f"(|grad| = {cert.grad_norm:.4f}, p-gap = {cert.p_gap:.4f})")


if __name__ == "__main__":
    main()
