"""
A benchmark with a shortcut
===========================

The synthetic benchmark hides a weak cue shared by every attack under much
stronger attack-specific cues.  A detector that learns the strong cues does
well on the attacks it saw and badly on new ones.
"""

import numpy as np

from ibcaan import SyntheticSpec, eer_from_scores, generate_dataset
from ibcaan.shiftbench import shared_cue_eer

spec = SyntheticSpec()
ds = generate_dataset(spec)
for name, split in ds.splits.items():
    print(f"{name:12s} n={len(split):5d}  attacks={sorted(set(split.a[split.y == 1].tolist()))}")

###############################################################################
# Two oracle detectors
# --------------------
# Scores are "higher means bonafide", so each detector is the negative of a
# projection.  The first looks only at the shared cue ``u``.

def eer_of(direction, split):
    s = -(split.x @ direction)
    return eer_from_scores(s[split.y == 0], s[split.y == 1])

print("closed form for the shared cue:", round(shared_cue_eer(spec), 4))
for name, split in ds.splits.items():
    print(f"{name:12s} shared cue {eer_of(ds.u, split):.3f}")

###############################################################################
# The second adds the training attack cues.  It halves the error on seen
# attacks and is close to chance on the held-out ones.  This is the shortcut
# a plain classifier tends to find.

shortcut = ds.u + ds.v[: spec.n_train_attacks].sum(axis=0)
for name, split in ds.splits.items():
    print(f"{name:12s} shortcut   {eer_of(shortcut, split):.3f}")

###############################################################################
# The held-out split also moves bonafide and spoof alike along ``w``.  Any
# weight the detector puts on ``w`` turns into a score offset there.

te = ds.splits["test_unseen"]
tr = ds.splits["train"]
print("mean shift along w:", np.round((te.x.mean(0) - tr.x.mean(0)) @ ds.w, 3))
