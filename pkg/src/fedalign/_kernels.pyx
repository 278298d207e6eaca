# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: batched MLP layers and the sequential SGNS pass.

Mirrors :mod:`fedalign._pure` function by function; keep both in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2

NAME = "compiled"


def linear_forward(double[:, ::1] X, double[:, ::1] W, double[::1] b):
    cdef Py_ssize_t n = X.shape[0], din = X.shape[1], dout = W.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, dout))
    cdef double[:, ::1] Y = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[j]
            for k in range(din):
                acc += X[i, k] * W[j, k]
            Y[i, j] = acc
    return out


def act_forward(int code, double[:, ::1] P):
    if code == 0:
        return np.asarray(P)
    cdef Py_ssize_t n = P.shape[0], m = P.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] A = out
    cdef Py_ssize_t i, j
    if code == 1:
        for i in range(n):
            for j in range(m):
                A[i, j] = P[i, j] if P[i, j] > 0.0 else 0.0
    elif code == 2:
        for i in range(n):
            for j in range(m):
                A[i, j] = tanh(P[i, j])
    else:
        raise ValueError(f"unknown activation code {code}")
    return out


def act_backward(int code, double[:, ::1] P, double[:, ::1] dA):
    if code == 0:
        return np.asarray(dA)
    cdef Py_ssize_t n = P.shape[0], m = P.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] dP = out
    cdef Py_ssize_t i, j
    cdef double t
    if code == 1:
        for i in range(n):
            for j in range(m):
                dP[i, j] = dA[i, j] if P[i, j] > 0.0 else 0.0
    elif code == 2:
        for i in range(n):
            for j in range(m):
                t = tanh(P[i, j])
                dP[i, j] = dA[i, j] * (1.0 - t * t)
    else:
        raise ValueError(f"unknown activation code {code}")
    return out


def linear_backward(double[:, ::1] X, double[:, ::1] W, double[:, ::1] dP):
    cdef Py_ssize_t n = X.shape[0], din = X.shape[1], dout = W.shape[0]
    cdef cnp.ndarray[double, ndim=2] dW_arr = np.zeros((dout, din))
    cdef cnp.ndarray[double, ndim=1] db_arr = np.zeros(dout)
    cdef cnp.ndarray[double, ndim=2] dX_arr = np.empty((n, din))
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dX = dX_arr
    cdef Py_ssize_t i, j, k
    cdef double g, acc
    for i in range(n):
        for j in range(dout):
            g = dP[i, j]
            db[j] += g
            for k in range(din):
                dW[j, k] += g * X[i, k]
    for i in range(n):
        for k in range(din):
            acc = 0.0
            for j in range(dout):
                acc += dP[i, j] * W[j, k]
            dX[i, k] = acc
    return dW_arr, db_arr, dX_arr


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sgns_train(double[:, ::1] emb, long[:, ::1] pairs, long[:, ::1] negatives,
               double lr):
    """In-place negative-sampling pass; see the pure version for the contract."""
    cdef Py_ssize_t d = emb.shape[1]
    cdef Py_ssize_t npairs = pairs.shape[0]
    cdef Py_ssize_t nneg = negatives.shape[1]
    cdef cnp.ndarray[double, ndim=1] center_arr = np.empty(d)
    cdef cnp.ndarray[double, ndim=1] acc_arr = np.empty(d)
    cdef double[::1] center = center_arr
    cdef double[::1] acc = acc_arr
    cdef double total = 0.0, x, s, g
    cdef Py_ssize_t p, k, j
    cdef long ctr, ctx, neg
    for p in range(npairs):
        ctr = pairs[p, 0]
        ctx = pairs[p, 1]
        for j in range(d):
            center[j] = emb[ctr, j]
            acc[j] = 0.0

        x = 0.0
        for j in range(d):
            x += emb[ctx, j] * center[j]
        s = _sigmoid(x)
        total -= log(s if s > 1e-12 else 1e-12)
        g = lr * (1.0 - s)
        for j in range(d):
            acc[j] += g * emb[ctx, j]
            emb[ctx, j] += g * center[j]

        for k in range(nneg):
            neg = negatives[p, k]
            if neg == ctr or neg == ctx:
                continue
            x = 0.0
            for j in range(d):
                x += emb[neg, j] * center[j]
            s = _sigmoid(x)
            total -= log((1.0 - s) if (1.0 - s) > 1e-12 else 1e-12)
            g = -lr * s
            for j in range(d):
                acc[j] += g * emb[neg, j]
                emb[neg, j] += g * center[j]

        for j in range(d):
            emb[ctr, j] += acc[j]
    return total
