"""
Compiled LSTM recurrences.

The per-timestep work of an LSTM is a small matmul plus a handful of
elementwise ops on a few thousand floats, which is dominated by interpreter
overhead when written as numpy calls. These kernels run the whole time loop
in one compiled call. float32 uses a vectorizable rational tanh (a few ulps
of error); float64 uses the exact libm tanh so gradient checks see the true
function.
"""
import math

import numpy as np
from numba import njit

_CLAMP = np.float32(7.90531110763549805)


@njit(fastmath=True, inline="always")
def _tanh32(x):
    x = min(max(x, -_CLAMP), _CLAMP)
    x2 = x * x
    p = np.float32(-2.76076847742355e-16)
    p = p * x2 + np.float32(2.00018790482477e-13)
    p = p * x2 + np.float32(-8.60467152213735e-11)
    p = p * x2 + np.float32(5.12229709037114e-08)
    p = p * x2 + np.float32(1.48572235717979e-05)
    p = p * x2 + np.float32(6.37261928875436e-04)
    p = p * x2 + np.float32(4.89352455891786e-03)
    q = np.float32(1.19825839466702e-06)
    q = q * x2 + np.float32(1.18534705686654e-04)
    q = q * x2 + np.float32(2.26843463243900e-03)
    q = q * x2 + np.float32(4.89352518554385e-03)
    return p * x / q


@njit(inline="always")
def _tanh64(x):
    return math.tanh(x)


def _make(tanh, fastmath):
    opts = dict(fastmath=fastmath, error_model="numpy", nogil=True)

    @njit(**opts)
    def forward(Zx, Wh, A, C, TC, Hs):
        # Zx (T,K,B,4H) input projections; C and Hs carry a zero slab at index 0
        T, K, B, G = Zx.shape
        H = G // 4
        half = Zx.dtype.type(0.5)
        for k in range(K):
            W = Wh[k]
            for t in range(T):
                z = np.dot(Hs[t, k], W)
                for b in range(B):
                    zx = Zx[t, k, b]
                    zb = z[b]
                    a = A[t, k, b]
                    cp = C[t, k, b]
                    cn = C[t + 1, k, b]
                    tcb = TC[t, k, b]
                    hb = Hs[t + 1, k, b]
                    for j in range(H):
                        i = half + half * tanh(half * (zb[j] + zx[j]))
                        f = half + half * tanh(half * (zb[H + j] + zx[H + j]))
                        o = half + half * tanh(half * (zb[2 * H + j] + zx[2 * H + j]))
                        g = tanh(zb[3 * H + j] + zx[3 * H + j])
                        c = f * cp[j] + i * g
                        tc = tanh(c)
                        a[j] = i
                        a[H + j] = f
                        a[2 * H + j] = o
                        a[3 * H + j] = g
                        cn[j] = c
                        tcb[j] = tc
                        hb[j] = o * tc

    @njit(**opts)
    def backward(dO, A, C, TC, WhT, dZ):
        T, K, B, H = dO.shape
        one = dO.dtype.type(1.0)
        for k in range(K):
            W = WhT[k]
            dh = np.zeros((B, H), dtype=dO.dtype)
            dc = np.zeros((B, H), dtype=dO.dtype)
            for t in range(T - 1, -1, -1):
                for b in range(B):
                    a = A[t, k, b]
                    cp = C[t, k, b]
                    tcb = TC[t, k, b]
                    dob = dO[t, k, b]
                    dz = dZ[t, k, b]
                    dhb = dh[b]
                    dcb = dc[b]
                    for j in range(H):
                        i = a[j]
                        f = a[H + j]
                        o = a[2 * H + j]
                        g = a[3 * H + j]
                        tc = tcb[j]
                        dht = dhb[j] + dob[j]
                        dct = dcb[j] + dht * o * (one - tc * tc)
                        dz[j] = dct * g * i * (one - i)
                        dz[H + j] = dct * cp[j] * f * (one - f)
                        dz[2 * H + j] = dht * tc * o * (one - o)
                        dz[3 * H + j] = dct * i * (one - g * g)
                        dcb[j] = dct * f
                dh = np.dot(dZ[t, k], W)

    return forward, backward


_fwd32, _bwd32 = _make(_tanh32, True)
_fwd64, _bwd64 = _make(_tanh64, False)


def lstm_forward_kernel(Zx, Wh, A, C, TC, Hs):
    (_fwd32 if Zx.dtype == np.float32 else _fwd64)(Zx, Wh, A, C, TC, Hs)


def lstm_backward_kernel(dO, A, C, TC, WhT, dZ):
    (_bwd32 if dO.dtype == np.float32 else _bwd64)(dO, A, C, TC, WhT, dZ)
