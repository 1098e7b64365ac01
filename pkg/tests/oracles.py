"""Independent scalar reference implementations used as test oracles."""
import math

import numpy as np

from pitchbench.contour import PitchContour


def brute_compare(est_voiced, est_f0, ref_voiced, ref_f0, threshold=100.0):
    """Frame-by-frame metric definitions with plain Python loops."""
    n = len(ref_voiced)
    n_voicing = n_both = n_gross = 0
    fine = []
    for k in range(n):
        ev, rv = bool(est_voiced[k]), bool(ref_voiced[k])
        if ev != rv:
            n_voicing += 1
        if ev and rv:
            n_both += 1
            cents = 1200.0 * math.log2(float(est_f0[k]) / float(ref_f0[k]))
            if abs(cents) >= threshold:
                n_gross += 1
            else:
                fine.append(cents)
    if fine:
        mu = sum(fine) / len(fine)
        fpe = math.sqrt(sum((c - mu) ** 2 for c in fine) / len(fine))
    else:
        fpe = None
    return {
        "n_frames": n, "n_voicing_errors": n_voicing, "n_both_voiced": n_both,
        "n_gross": n_gross, "vde": n_voicing / n, "ffe": (n_voicing + n_gross) / n,
        "gpe": n_gross / n_both if n_both else None, "fpe": fpe, "fine": fine,
    }


def random_pair(rng, n=None):
    """A random (est, ref) contour pair on a 10 ms grid."""
    n = int(rng.integers(1, 300)) if n is None else n
    ref_voiced = rng.random(n) < rng.uniform(0.2, 1.0)
    est_voiced = np.where(rng.random(n) < rng.uniform(0.0, 0.3), ~ref_voiced, ref_voiced)
    ref_f0 = np.exp(rng.uniform(np.log(60), np.log(1500), n))
    cents = rng.normal(0, 20, n)
    jumps = rng.random(n) < 0.1
    cents[jumps] += rng.choice([-1200.0, 1200.0, 700.0, -300.0, 150.0], jumps.sum())
    est_f0 = ref_f0 * 2.0 ** (cents / 1200)
    ref = PitchContour(0.010, ref_voiced, ref_f0, ref_voiced.astype(float))
    est = PitchContour(0.010, est_voiced, est_f0, est_voiced.astype(float))
    return est, ref


def inject_octave_errors(contour, fraction, rng):
    """Multiply a random ``fraction`` of voiced frames by 2 or 1/2."""
    f0 = contour.f0.copy()
    idx = np.flatnonzero(contour.voiced)
    pick = rng.choice(idx, size=int(round(fraction * idx.size)), replace=False)
    f0[pick] *= rng.choice([0.5, 2.0], size=pick.size)
    return contour.with_f0(f0), pick
