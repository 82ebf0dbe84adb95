# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network kernels; same contract as ``_pykernels``.

Work is laid out batch-wide (one long loop per elementwise stage) so the
compiler can vectorize the exp calls.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, floor, sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

DEF MAX_HIDDEN = 64
DEF MAX_ATOMS = 256


cdef void _hidden(const double* w1, const double* b1, const double* x, Py_ssize_t bsz,
                  Py_ssize_t nh, Py_ssize_t d, double* pre, double* sig, double* h) noexcept nogil:
    """pre = x W1^T + b1; sig = sigmoid(pre); h = pre * sig. All (bsz, nh)."""
    cdef Py_ssize_t b, i, j, n = bsz * nh
    cdef double acc
    cdef const double* xr
    for b in range(bsz):
        xr = x + b * d
        for i in range(nh):
            acc = b1[i]
            for j in range(d):
                acc += w1[i * d + j] * xr[j]
            pre[b * nh + i] = acc
    for i in range(n):
        sig[i] = 1.0 / (1.0 + exp(-pre[i]))
    for i in range(n):
        h[i] = pre[i] * sig[i]


cdef void _output(const double* w2t, const double* b2, const double* h, Py_ssize_t bsz,
                  Py_ssize_t nh, Py_ssize_t nout, double* out) noexcept nogil:
    """out (bsz, nout) = h W2^T + b2, with w2t laid out (nh, nout)."""
    cdef Py_ssize_t b, j, k
    cdef double hj
    cdef double* row
    cdef const double* wrow
    for b in range(bsz):
        row = out + b * nout
        for k in range(nout):
            row[k] = b2[k]
        for j in range(nh):
            hj = h[b * nh + j]
            wrow = w2t + j * nout
            for k in range(nout):
                row[k] += wrow[k] * hj


cdef void _softmax_groups(double* buf, Py_ssize_t groups, Py_ssize_t nz, const double* support,
                          double* q) noexcept nogil:
    """In-place softmax over consecutive groups of nz values; q[g] = E[support]."""
    cdef Py_ssize_t g, k, n = groups * nz
    cdef double mx, tot, inv, qa
    cdef double* p
    if nz == 1:
        for g in range(groups):
            q[g] = buf[g]
            buf[g] = 1.0
        return
    for g in range(groups):
        p = buf + g * nz
        mx = p[0]
        for k in range(1, nz):
            if p[k] > mx:
                mx = p[k]
        for k in range(nz):
            p[k] -= mx
    for k in range(n):
        buf[k] = exp(buf[k])
    for g in range(groups):
        p = buf + g * nz
        tot = 0.0
        for k in range(nz):
            tot += p[k]
        inv = 1.0 / tot
        qa = 0.0
        for k in range(nz):
            p[k] *= inv
            qa += p[k] * support[k]
        q[g] = qa


cdef void _project_row(double reward, double gamma, const double* p, const double* support,
                       Py_ssize_t n, double* out) noexcept nogil:
    cdef Py_ssize_t j, lo, hi
    cdef double v_min = support[0], v_max = support[n - 1]
    cdef double dz = (v_max - v_min) / (n - 1)
    cdef double tz, pos, frac
    for j in range(n):
        out[j] = 0.0
    for j in range(n):
        tz = reward + gamma * support[j]
        if tz < v_min:
            tz = v_min
        elif tz > v_max:
            tz = v_max
        pos = (tz - v_min) / dz
        lo = <Py_ssize_t> floor(pos)
        if lo < 0:
            lo = 0
        elif lo > n - 1:
            lo = n - 1
        hi = lo + 1 if lo < n - 1 else n - 1
        frac = pos - lo
        out[lo] += p[j] * (1.0 - frac)
        out[hi] += p[j] * frac


cdef double _loss_grads(const double* w1, const double* b1, const double* w2, const double* b2,
                        const double* x, const long long* actions, const double* targets,
                        Py_ssize_t bsz, Py_ssize_t nh, Py_ssize_t d, Py_ssize_t nz,
                        double* gw1, double* gb1, double* gw2, double* gb2,
                        double* work) noexcept nogil:
    """Mean loss over the batch; gradients are accumulated into g*.

    ``work`` must hold 3*bsz*nh + 2*bsz*nz doubles.
    """
    cdef double* pre = work
    cdef double* sig = pre + bsz * nh
    cdef double* h = sig + bsz * nh
    cdef double* lg = h + bsz * nh
    cdef double* dl = lg + bsz * nz
    cdef double dh[MAX_HIDDEN]
    cdef Py_ssize_t b, t, j, i, row, base, n = bsz * nz
    cdef double acc, mx, tot, logz, tsum, err, s, g, loss = 0.0, inv_b = 1.0 / bsz
    cdef const double* wr
    cdef const double* hb
    cdef const double* tg
    cdef double* lgb
    cdef double* dlb
    _hidden(w1, b1, x, bsz, nh, d, pre, sig, h)
    for b in range(bsz):
        base = actions[b] * nz
        hb = h + b * nh
        lgb = lg + b * nz
        for t in range(nz):
            wr = w2 + (base + t) * nh
            acc = b2[base + t]
            for j in range(nh):
                acc += wr[j] * hb[j]
            lgb[t] = acc
    if nz == 1:
        for b in range(bsz):
            err = lg[b] - targets[b]
            loss += err * err
            dl[b] = 2.0 * err * inv_b
    else:
        for b in range(bsz):
            lgb = lg + b * nz
            mx = lgb[0]
            for t in range(1, nz):
                if lgb[t] > mx:
                    mx = lgb[t]
            for t in range(nz):
                lgb[t] -= mx
        for i in range(n):
            dl[i] = exp(lg[i])
        for b in range(bsz):
            lgb = lg + b * nz
            dlb = dl + b * nz
            tg = targets + b * nz
            tot = 0.0
            tsum = 0.0
            for t in range(nz):
                tot += dlb[t]
                tsum += tg[t]
            logz = log(tot)
            for t in range(nz):
                loss -= tg[t] * (lgb[t] - logz)
            s = tsum / tot
            for t in range(nz):
                dlb[t] = (dlb[t] * s - tg[t]) * inv_b
    for b in range(bsz):
        base = actions[b] * nz
        hb = h + b * nh
        dlb = dl + b * nz
        for j in range(nh):
            dh[j] = 0.0
        for t in range(nz):
            row = base + t
            g = dlb[t]
            gb2[row] += g
            wr = w2 + row * nh
            for j in range(nh):
                gw2[row * nh + j] += g * hb[j]
                dh[j] += g * wr[j]
        for j in range(nh):
            s = sig[b * nh + j]
            g = dh[j] * (s + pre[b * nh + j] * s * (1.0 - s))
            gb1[j] += g
            for i in range(d):
                gw1[j * d + i] += g * x[b * d + i]
    return loss * inv_b


cdef class _Scratch:
    cdef double* ptr
    cdef Py_ssize_t size

    def __cinit__(self, Py_ssize_t size):
        self.ptr = <double*> malloc(max(size, 1) * sizeof(double))
        self.size = size
        if self.ptr == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.ptr)


def _check(Py_ssize_t nh, Py_ssize_t nz):
    if nh > MAX_HIDDEN or nz > MAX_ATOMS:
        raise ValueError("network too large for the compiled kernels")


def forward_batch(const double[:, ::1] w1, const double[::1] b1,
                  const double[:, ::1] w2, const double[::1] b2,
                  x_in, int num_actions, int num_atoms, const double[::1] support):
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] w2t = np.ascontiguousarray(np.asarray(w2).T)
    cdef Py_ssize_t bsz = x.shape[0], nh = w1.shape[0], d = w1.shape[1]
    cdef Py_ssize_t nout = w2.shape[0]
    _check(nh, num_atoms)
    probs_arr = np.empty((bsz, num_actions, num_atoms), dtype=np.float64)
    q_arr = np.empty((bsz, num_actions), dtype=np.float64)
    if bsz == 0:
        return probs_arr, q_arr
    cdef double[:, :, ::1] probs = probs_arr
    cdef double[:, ::1] q = q_arr
    cdef _Scratch s = _Scratch(3 * bsz * nh)
    _hidden(&w1[0, 0], &b1[0], &x[0, 0], bsz, nh, d, s.ptr, s.ptr + bsz * nh,
            s.ptr + 2 * bsz * nh)
    _output(&w2t[0, 0], &b2[0], s.ptr + 2 * bsz * nh, bsz, nh, nout, &probs[0, 0, 0])
    _softmax_groups(&probs[0, 0, 0], bsz * num_actions, num_atoms, &support[0], &q[0, 0])
    return probs_arr, q_arr


def q_values(const double[:, ::1] w1, const double[::1] b1,
             const double[:, ::1] w2, const double[::1] b2,
             x_in, int num_actions, int num_atoms, const double[::1] support):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t nh = w1.shape[0], d = w1.shape[1], nout = w2.shape[0], k, j
    cdef double pre[MAX_HIDDEN]
    cdef double sig[MAX_HIDDEN]
    cdef double h[MAX_HIDDEN]
    cdef double* buf
    cdef double acc
    cdef const double* wr
    _check(nh, num_atoms)
    q_arr = np.empty(num_actions, dtype=np.float64)
    cdef double[::1] q = q_arr
    buf = <double*> malloc(nout * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    _hidden(&w1[0, 0], &b1[0], &x[0], 1, nh, d, pre, sig, h)
    for k in range(nout):
        wr = &w2[k, 0]
        acc = b2[k]
        for j in range(nh):
            acc += wr[j] * h[j]
        buf[k] = acc
    _softmax_groups(buf, num_actions, num_atoms, &support[0], &q[0])
    free(buf)
    return q_arr


def c51_project(rewards_in, double gamma, next_probs_in, const double[::1] support):
    cdef const double[::1] rewards = np.ascontiguousarray(rewards_in, dtype=np.float64).reshape(-1)
    cdef const double[:, ::1] p = np.ascontiguousarray(next_probs_in, dtype=np.float64)
    cdef Py_ssize_t bsz = p.shape[0], n = support.shape[0], b
    out_arr = np.zeros((bsz, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if n == 1:
        out_arr[:] = 1.0
        return out_arr
    for b in range(bsz):
        _project_row(rewards[b], gamma, &p[b, 0], &support[0], n, &out[b, 0])
    return out_arr


def loss_and_grads(const double[:, ::1] w1, const double[::1] b1,
                   const double[:, ::1] w2, const double[::1] b2,
                   x_in, actions_in, targets_in, int num_actions, int num_atoms):
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const long long[::1] actions = np.ascontiguousarray(actions_in, dtype=np.int64)
    cdef const double[:, ::1] targets = np.ascontiguousarray(targets_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], nh = w1.shape[0], d = w1.shape[1], nz = num_atoms
    cdef Py_ssize_t nout = w2.shape[0]
    _check(nh, nz)
    gw1_arr = np.zeros((nh, d), dtype=np.float64)
    gb1_arr = np.zeros(nh, dtype=np.float64)
    gw2_arr = np.zeros((nout, nh), dtype=np.float64)
    gb2_arr = np.zeros(nout, dtype=np.float64)
    cdef double[:, ::1] gw1 = gw1_arr
    cdef double[::1] gb1 = gb1_arr
    cdef double[:, ::1] gw2 = gw2_arr
    cdef double[::1] gb2 = gb2_arr
    cdef _Scratch s = _Scratch(3 * bsz * nh + 2 * bsz * nz)
    loss = _loss_grads(&w1[0, 0], &b1[0], &w2[0, 0], &b2[0], &x[0, 0], &actions[0],
                       &targets[0, 0], bsz, nh, d, nz, &gw1[0, 0], &gb1[0], &gw2[0, 0], &gb2[0],
                       s.ptr)
    return loss, gw1_arr, gb1_arr, gw2_arr, gb2_arr


def dqn_loss_and_grads(train_params, select_params, boot_params, x_in, actions_in, rewards_in,
                       next_in, double gamma, int num_actions, int num_atoms,
                       const double[::1] support):
    cdef const double[:, ::1] tw1 = train_params[0]
    cdef const double[::1] tb1 = train_params[1]
    cdef const double[:, ::1] tw2 = train_params[2]
    cdef const double[::1] tb2 = train_params[3]
    cdef const double[:, ::1] sw1 = select_params[0]
    cdef const double[::1] sb1 = select_params[1]
    cdef const double[:, ::1] sw2t = np.ascontiguousarray(np.asarray(select_params[2]).T)
    cdef const double[::1] sb2 = select_params[3]
    cdef bint same = boot_params is select_params
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] nx = np.ascontiguousarray(next_in, dtype=np.float64)
    cdef const long long[::1] actions = np.ascontiguousarray(actions_in, dtype=np.int64)
    cdef const double[::1] rewards = np.ascontiguousarray(rewards_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], nh = tw1.shape[0], d = tw1.shape[1]
    cdef Py_ssize_t nz = num_atoms, na = num_actions, nout = tw2.shape[0], b, a, best
    cdef const double[:, ::1] bw1
    cdef const double[::1] bb1
    cdef const double[:, ::1] bw2t
    cdef const double[::1] bb2
    _check(nh, nz)
    gw1_arr = np.zeros((nh, d), dtype=np.float64)
    gb1_arr = np.zeros(nh, dtype=np.float64)
    gw2_arr = np.zeros((nout, nh), dtype=np.float64)
    gb2_arr = np.zeros(nout, dtype=np.float64)
    if bsz == 0:
        return None, gw1_arr, gb1_arr, gw2_arr, gb2_arr
    cdef double[:, ::1] gw1 = gw1_arr
    cdef double[::1] gb1 = gb1_arr
    cdef double[:, ::1] gw2 = gw2_arr
    cdef double[::1] gb2 = gb2_arr
    # layout: hidden (3*B*H) | probs (B*A*N) | q (B*A) | boot probs | boot q | targets (B*N)
    cdef Py_ssize_t nhid = 3 * bsz * nh
    cdef _Scratch s = _Scratch(nhid + 2 * (bsz * nout + bsz * na) + bsz * nz
                               + 3 * bsz * nh + 2 * bsz * nz)
    cdef double* probs = s.ptr + nhid
    cdef double* q = probs + bsz * nout
    cdef double* bprobs = q + bsz * na
    cdef double* bq = bprobs + bsz * nout
    cdef double* targets = bq + bsz * na
    cdef double* work = targets + bsz * nz
    _hidden(&sw1[0, 0], &sb1[0], &nx[0, 0], bsz, nh, d, s.ptr, s.ptr + bsz * nh,
            s.ptr + 2 * bsz * nh)
    _output(&sw2t[0, 0], &sb2[0], s.ptr + 2 * bsz * nh, bsz, nh, nout, probs)
    _softmax_groups(probs, bsz * na, nz, &support[0], q)
    if not same:
        bw1 = boot_params[0]
        bb1 = boot_params[1]
        bw2t = np.ascontiguousarray(np.asarray(boot_params[2]).T)
        bb2 = boot_params[3]
        _hidden(&bw1[0, 0], &bb1[0], &nx[0, 0], bsz, nh, d, s.ptr, s.ptr + bsz * nh,
                s.ptr + 2 * bsz * nh)
        _output(&bw2t[0, 0], &bb2[0], s.ptr + 2 * bsz * nh, bsz, nh, nout, bprobs)
        _softmax_groups(bprobs, bsz * na, nz, &support[0], bq)
    else:
        bprobs = probs
        bq = q
    for b in range(bsz):
        best = 0
        for a in range(1, na):
            if q[b * na + a] > q[b * na + best]:
                best = a
        if nz == 1:
            targets[b] = rewards[b] + gamma * bq[b * na + best]
        else:
            _project_row(rewards[b], gamma, bprobs + b * nout + best * nz, &support[0], nz,
                         targets + b * nz)
    loss = _loss_grads(&tw1[0, 0], &tb1[0], &tw2[0, 0], &tb2[0], &x[0, 0], &actions[0], targets,
                       bsz, nh, d, nz, &gw1[0, 0], &gb1[0], &gw2[0, 0], &gb2[0], work)
    return loss, gw1_arr, gb1_arr, gw2_arr, gb2_arr


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v, double lr,
                double beta1, double beta2, double eps, double c1, double c2):
    """In-place Adam step on flat views; ``c1``/``c2`` are the bias corrections."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi
    for i in range(n):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
