"""Exact structural identities evaluated on the computed matrices."""

from __future__ import annotations

import numpy as np

from . import particles
from .errors import MatchFailure
from .hidden import (control_bound_slack, drift_bound_slack, drift_identity_check,
                     eigen_lift, shift_identity_check)
from .kernels import GammaReport, gamma_closed_form
from .model import ModelSpec
from .spectral import Check, SpectralReport, multiset_difference

TOL_INTERTWINING = 1e-10
TOL_NULL = 1e-11
TOL_REVERSIBLE = 1e-11
TOL_DRIFT = 1e-11
TOL_SHIFT = 1e-12
TOL_LIFT = 1e-9
TOL_CLOSED_FORM = 1e-12


def _status(ok):
    return "pass" if ok else "fail"


def structural_checks(spec: ModelSpec, kmax: int, hier: particles.Hierarchy,
                      report: GammaReport, sp: SpectralReport, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    ks = range(1, kmax + 1)
    checks = []

    res = {k: particles.intertwining_residual(hier.generator(k - 1), hier.generator(k),
                                              hier.annihilation(k)) for k in ks}
    checks.append(Check("intertwining", "A_k L_{k-1} = L_k A_k",
                        _status(max(res.values()) <= TOL_INTERTWINING), {"residual": res}))

    res = {k: float(np.max(np.abs(hier.mu(k) @ hier.generator(k).matrix))) for k in ks}
    checks.append(Check("invariant_measure", "mu_k L_k = 0",
                        _status(max(res.values()) <= TOL_NULL), {"residual": res}))

    levels = {0: np.zeros(1), **sp.levels}
    nest = {}
    for k in ks:
        try:
            multiset_difference(levels[k], levels[k - 1])
            nest[k] = "matched"
        except MatchFailure as exc:
            nest[k] = str(exc)
    checks.append(Check("spectrum_nesting", "spectrum of L_{k-1} is contained in that of L_k",
                        _status(all(v == "matched" for v in nest.values())), {"levels": nest}))

    if spec.reversible:
        res = {}
        for k in ks:
            dl = hier.mu(k)[:, None] * hier.generator(k).dense()
            res[k] = float(np.max(np.abs(dl - dl.T)))
        checks.append(Check("reversibility", "diag(mu_k) L_k is symmetric",
                            _status(max(res.values()) <= TOL_REVERSIBLE), {"residual": res}))
        cf = gamma_closed_form(spec)
        ok = abs(cf - report.gamma) <= TOL_CLOSED_FORM * abs(cf)
        checks.append(Check("gamma_closed_form", "moment-based gamma equals the family formula",
                            _status(ok), {"closed_form": cf, "gamma": report.gamma}))
    else:
        checks.append(Check("reversibility", "not applicable to discrete kernels", "n/a"))
        checks.append(Check("gamma_closed_form", "no closed form for discrete kernels", "n/a"))

    r = drift_identity_check(spec, hier, report)
    checks.append(Check("drift_identity",
                        "L Var_pi = -sum_{x<y} (chi_xy + sigma_xy)(theta_x - theta_y)^2",
                        _status(r <= TOL_DRIFT), {"residual": r}))
    slack = drift_bound_slack(spec, rng, 100, hier, report)
    checks.append(Check("drift_bound", "-L Var_pi >= gamma * E_RW at random theta",
                        _status(slack >= -TOL_DRIFT), {"min_slack": slack}))

    k = max(kmax, 1)
    r = shift_identity_check(spec, k, rng, 20, hier)
    checks.append(Check("shift_identity", "D_b = exp(-b A) D_0 at random (theta, b)",
                        _status(r <= TOL_SHIFT), {"k": k, "residual": r}))

    if kmax >= 2:
        lifted = eigen_lift(spec, 2, hier)
        r = max(e.residual for e in lifted)
        slack = min(control_bound_slack(spec, e, 2, rng, 100, hier, report.pi) for e in lifted)
        ok = r <= TOL_LIFT and slack >= -TOL_LIFT
        checks.append(Check("eigen_lift",
                            "new level-2 eigenvectors lift to polynomial eigenfunctions "
                            "controlled by Var_pi",
                            _status(ok), {"residual": r, "min_control_slack": slack,
                                          "count": len(lifted)}))
    else:
        checks.append(Check("eigen_lift", "requires kmax >= 2", "n/a"))
    return checks
