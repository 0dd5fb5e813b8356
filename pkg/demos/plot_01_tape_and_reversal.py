"""
Recording gradients on a tape
=============================

Every operation on a :class:`~ibcaan.Tensor` inside a ``Tape`` block is
recorded, and ``backward`` walks the records in reverse.  Outside a tape the
same calls just compute values.
"""

import numpy as np

from ibcaan import Tape, Tensor
from ibcaan import autodiff as ad

###############################################################################
# A tiny logistic unit
# --------------------
# Leaves that should receive a gradient are created with ``requires_grad``.

w = Tensor(np.array([[0.5], [-1.0]]), requires_grad=True)
x = np.array([[1.0, 2.0], [0.0, 1.0]])

with Tape() as tape:
    p = ad.sigmoid(ad.matmul(Tensor(x), w))
    loss = ad.reduce_mean(p)

(g,) = tape.backward(loss, [w])
print("loss", loss.item())
print("dloss/dw", g.ravel())

###############################################################################
# The same number by finite differences:

def f(v):
    return ad.reduce_mean(ad.sigmoid(ad.matmul(Tensor(x), Tensor(v)))).item()

print("numeric  ", ad.numeric_grad(f, w.data).ravel())

###############################################################################
# A tape is single use.  Calling ``backward`` twice raises ``TapeError``.

try:
    tape.backward(loss, [w])
except ad.TapeError as err:
    print("second backward:", err)

###############################################################################
# Gradient reversal
# -----------------
# ``grad_reverse`` leaves values untouched and multiplies the incoming
# gradient by ``-lam``.  Sitting between an encoder and a discriminator, it
# lets one backward pass train the discriminator to find the attack while
# pushing the encoder to hide it.

z = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
for lam in (0.0, 0.5, 1.0):
    with Tape() as tape:
        out = ad.grad_reverse(z, lam)
        loss = ad.reduce_sum(out * 2.0)
    print(f"lam={lam}: forward {out.data}, grad {tape.backward(loss, [z])[0]}")

###############################################################################
# During training ``lam`` ramps up from 0 with the fraction of steps done.

from ibcaan import grl_lambda

for p in (0.0, 0.1, 0.25, 0.5, 1.0):
    print(f"p={p:4.2f}  lambda={grl_lambda(p):.6f}")
