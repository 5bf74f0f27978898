# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree-growing kernels.

Operation-for-operation twin of ``_pure.py``: identical splitmix64 stream,
sequential summation order and tie-breaking, so both backends grow the
same trees.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free, qsort
from libc.string cimport memset
from libc.math cimport INFINITY

cnp.import_array()


cdef struct SortPair:
    double value
    Py_ssize_t pos


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef const SortPair* pa = <const SortPair*> a
    cdef const SortPair* pb = <const SortPair*> b
    if pa.value < pb.value:
        return -1
    if pa.value > pb.value:
        return 1
    if pa.pos < pb.pos:
        return -1
    if pa.pos > pb.pos:
        return 1
    return 0


cdef inline uint64_t _next_u64(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t> 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t> 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* state) noexcept nogil:
    return <double> (_next_u64(state) >> 11) * (1.0 / 9007199254740992.0)


# a later feature must beat the incumbent by this relative margin, so that
# features inducing the same partition tie despite summation-order rounding
cdef double TIE_RTOL = 1e-10


cdef inline bint _beats(double score, double best) noexcept nogil:
    return score > best + TIE_RTOL * (best if best > 0.0 else -best)


cdef inline double _midpoint(double lo, double hi) noexcept nogil:
    cdef double mid = 0.5 * (lo + hi)
    if not (lo < mid and mid < hi):
        mid = lo
    return mid


cdef Py_ssize_t _feature_subset(uint64_t* state, Py_ssize_t n_features,
                                Py_ssize_t max_features, Py_ssize_t* pool,
                                Py_ssize_t* out) noexcept nogil:
    cdef Py_ssize_t i, j, tmp, k, m
    for i in range(n_features):
        pool[i] = i
    if max_features >= n_features:
        for i in range(n_features):
            out[i] = i
        return n_features
    for i in range(max_features):
        j = i + <Py_ssize_t> (_uniform(state) * (n_features - i))
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    # insertion sort of the chosen prefix
    m = max_features
    for i in range(m):
        out[i] = pool[i]
    for i in range(1, m):
        tmp = out[i]
        k = i - 1
        while k >= 0 and out[k] > tmp:
            out[k + 1] = out[k]
            k -= 1
        out[k + 1] = tmp
    return m


cdef class _NodeOut:
    cdef list feature, threshold, left, right, value

    def __cinit__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    cdef Py_ssize_t add(self, double v):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(v)
        return len(self.feature) - 1

    cdef tuple arrays(self):
        return (np.asarray(self.feature, dtype=np.intp),
                np.asarray(self.threshold, dtype=np.float64),
                np.asarray(self.left, dtype=np.intp),
                np.asarray(self.right, dtype=np.intp),
                np.asarray(self.value, dtype=np.float64))


cdef inline bint _is_pure(const double[::1] g, const Py_ssize_t* idx,
                          Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t i
    cdef double g0 = g[idx[start]]
    for i in range(start + 1, end):
        if g[idx[i]] != g0:
            return False
    return True


cdef inline double _node_sum(const double[::1] g, const Py_ssize_t* idx,
                             Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(start, end):
        s += g[idx[i]]
    return s


def build_tree(X, g, samples, Py_ssize_t max_depth, Py_ssize_t min_samples_leaf,
               Py_ssize_t max_features, int splitter, double reg_lambda,
               double gamma, seed, presorted=None):
    """Grow one depth-first tree on gradients ``g`` (unit hessians).

    Node members are kept as positions into ``samples`` in ascending order.
    The exact splitter sorts every feature once at the root and keeps the
    per-feature orderings through stable partitions, which reproduces a
    per-node sort by (value, position). ``presorted`` (stable argsort of
    each column of ``X``, shape ``(p, n_rows)``) replaces the root sort when
    ``samples`` is non-decreasing.
    """
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef cnp.ndarray samp = np.ascontiguousarray(samples, dtype=np.intp)
    cdef Py_ssize_t n_samples = samp.shape[0]
    cdef Py_ssize_t n_features = Xv.shape[1]
    cdef uint64_t state = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef bint exact = splitter == 0
    cdef Py_ssize_t n_alloc = max(n_samples, 1)

    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(n_alloc * sizeof(Py_ssize_t))
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc(n_alloc * sizeof(Py_ssize_t))
    cdef double* gs = <double*> malloc(n_alloc * sizeof(double))
    cdef char* left_flag = <char*> malloc(n_alloc * sizeof(char))
    cdef SortPair* pairs = NULL
    cdef Py_ssize_t* order = NULL
    cdef double* xs = NULL
    cdef Py_ssize_t* pool = <Py_ssize_t*> malloc(max(n_features, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* feats = <Py_ssize_t*> malloc(max(n_features, 1) * sizeof(Py_ssize_t))
    # stack entries: start, end, depth, parent, is_left
    cdef Py_ssize_t* stack = <Py_ssize_t*> malloc(5 * (2 * n_samples + 2) * sizeof(Py_ssize_t))
    if exact:
        pairs = <SortPair*> malloc(n_alloc * sizeof(SortPair))
        order = <Py_ssize_t*> malloc(n_alloc * max(n_features, 1) * sizeof(Py_ssize_t))
        xs = <double*> malloc(n_alloc * max(n_features, 1) * sizeof(double))
    if not idx or not buf or not gs or not left_flag or not pool or not feats or not stack \
            or (exact and (not pairs or not order or not xs)):
        free(idx); free(buf); free(gs); free(left_flag); free(pool); free(feats)
        free(stack); free(pairs); free(order); free(xs)
        raise MemoryError()

    cdef const Py_ssize_t[::1] sv = samp
    cdef Py_ssize_t i, j, k, f, top, start, end, depth, parent, is_left, node_id
    cdef Py_ssize_t n_node, n_left, n_sel, best_f, nl, nr, p
    cdef Py_ssize_t* ord_f
    cdef double* xs_f
    cdef Py_ssize_t n_rows = Xv.shape[0]
    cdef Py_ssize_t* first = NULL
    cdef Py_ssize_t* count = NULL
    cdef const Py_ssize_t[:, ::1] ps
    cdef bint use_presort = False
    cdef Py_ssize_t r, c
    if exact and presorted is not None:
        ps = np.ascontiguousarray(presorted, dtype=np.intp)
        if ps.shape[0] != n_features or ps.shape[1] != n_rows:
            raise ValueError("presorted must have shape (n_features, n_rows)")
        use_presort = True
        for i in range(1, n_samples):
            if sv[i] < sv[i - 1]:
                use_presort = False
                break
    cdef double G, GL, GR, score, best_score, best_thr, lo, hi, theta, x, cum, gain
    cdef double f_score, f_thr
    cdef _NodeOut out = _NodeOut()

    try:
        with nogil:
            for i in range(n_samples):
                idx[i] = i
                gs[i] = gv[sv[i]]
            if exact:
                for f in range(n_features):
                    xs_f = xs + f * n_samples
                    for i in range(n_samples):
                        xs_f[i] = Xv[sv[i], f]
                if use_presort:
                    first = <Py_ssize_t*> malloc(max(n_rows, 1) * sizeof(Py_ssize_t))
                    count = <Py_ssize_t*> malloc(max(n_rows, 1) * sizeof(Py_ssize_t))
                    if not first or not count:
                        use_presort = False
                if use_presort:
                    # rows are sorted, so the copies of a row occupy consecutive positions
                    memset(count, 0, n_rows * sizeof(Py_ssize_t))
                    for i in range(n_samples):
                        r = sv[i]
                        if count[r] == 0:
                            first[r] = i
                        count[r] += 1
                    for f in range(n_features):
                        ord_f = order + f * n_samples
                        k = 0
                        for j in range(n_rows):
                            r = ps[f, j]
                            for c in range(count[r]):
                                ord_f[k] = first[r] + c
                                k += 1
                elif exact:
                    for f in range(n_features):
                        xs_f = xs + f * n_samples
                        for i in range(n_samples):
                            pairs[i].value = xs_f[i]
                            pairs[i].pos = i
                        qsort(pairs, n_samples, sizeof(SortPair), _cmp_pair)
                        ord_f = order + f * n_samples
                        for i in range(n_samples):
                            ord_f[i] = pairs[i].pos
        stack[0] = 0; stack[1] = n_samples; stack[2] = 0; stack[3] = -1; stack[4] = 0
        top = 1
        while top > 0:
            top -= 1
            start = stack[5 * top]
            end = stack[5 * top + 1]
            depth = stack[5 * top + 2]
            parent = stack[5 * top + 3]
            is_left = stack[5 * top + 4]
            n_node = end - start
            G = 0.0
            for i in range(start, end):
                G += gs[idx[i]]
            node_id = out.add(-G / (n_node + reg_lambda))
            if parent >= 0:
                if is_left:
                    out.left[parent] = node_id
                else:
                    out.right[parent] = node_id

            if (max_depth >= 0 and depth >= max_depth) or n_node < 2 * min_samples_leaf \
                    or n_node < 2 or _is_pure_pos(gs, idx, start, end):
                continue

            with nogil:
                n_sel = _feature_subset(&state, n_features, max_features, pool, feats)
                best_score = -INFINITY
                best_f = -1
                best_thr = 0.0
                for k in range(n_sel):
                    f = feats[k]
                    f_score = -INFINITY
                    f_thr = 0.0
                    if exact:
                        ord_f = order + f * n_samples
                        xs_f = xs + f * n_samples
                        cum = 0.0
                        for i in range(start, end - 1):
                            cum += gs[ord_f[i]]
                            nl = i - start + 1
                            nr = n_node - nl
                            if xs_f[ord_f[i]] < xs_f[ord_f[i + 1]] and nl >= min_samples_leaf \
                                    and nr >= min_samples_leaf:
                                GL = cum
                                GR = G - GL
                                score = GL * GL / (<double> nl + reg_lambda) \
                                    + GR * GR / (<double> nr + reg_lambda)
                                if score > f_score:
                                    f_score = score
                                    f_thr = _midpoint(xs_f[ord_f[i]], xs_f[ord_f[i + 1]])
                    else:
                        lo = Xv[sv[idx[start]], f]
                        hi = lo
                        for i in range(start + 1, end):
                            x = Xv[sv[idx[i]], f]
                            if x < lo:
                                lo = x
                            if x > hi:
                                hi = x
                        if not hi > lo:
                            continue
                        while True:
                            theta = lo + _uniform(&state) * (hi - lo)
                            if lo < theta and theta < hi:
                                break
                        nl = 0
                        GL = 0.0
                        for i in range(start, end):
                            if Xv[sv[idx[i]], f] <= theta:
                                nl += 1
                                GL += gs[idx[i]]
                        nr = n_node - nl
                        if nl < min_samples_leaf or nr < min_samples_leaf:
                            continue
                        GR = G - GL
                        f_score = GL * GL / (<double> nl + reg_lambda) \
                            + GR * GR / (<double> nr + reg_lambda)
                        f_thr = theta
                    if f_score > -INFINITY and (best_f < 0 or _beats(f_score, best_score)):
                        best_score = f_score
                        best_f = f
                        best_thr = f_thr

            if best_f < 0:
                continue
            gain = 0.5 * (best_score - G * G / (n_node + reg_lambda)) - gamma
            if not gain > 0.0:
                continue
            out.feature[node_id] = best_f
            out.threshold[node_id] = best_thr

            with nogil:
                # stable partition: left block keeps order, right block keeps order
                n_left = 0
                j = 0
                for i in range(start, end):
                    p = idx[i]
                    if Xv[sv[p], best_f] <= best_thr:
                        left_flag[p] = 1
                        idx[start + n_left] = p
                        n_left += 1
                    else:
                        left_flag[p] = 0
                        buf[j] = p
                        j += 1
                for i in range(j):
                    idx[start + n_left + i] = buf[i]
                if exact:
                    for f in range(n_features):
                        ord_f = order + f * n_samples
                        k = start
                        j = 0
                        for i in range(start, end):
                            p = ord_f[i]
                            if left_flag[p]:
                                ord_f[k] = p
                                k += 1
                            else:
                                buf[j] = p
                                j += 1
                        for i in range(j):
                            ord_f[k + i] = buf[i]

            # right pushed first so the left child is grown first
            stack[5 * top] = start + n_left; stack[5 * top + 1] = end
            stack[5 * top + 2] = depth + 1; stack[5 * top + 3] = node_id; stack[5 * top + 4] = 0
            top += 1
            stack[5 * top] = start; stack[5 * top + 1] = start + n_left
            stack[5 * top + 2] = depth + 1; stack[5 * top + 3] = node_id; stack[5 * top + 4] = 1
            top += 1
    finally:
        free(idx); free(buf); free(gs); free(left_flag); free(pool); free(feats)
        free(stack); free(pairs); free(order); free(xs); free(first); free(count)

    return out.arrays()


cdef inline bint _is_pure_pos(const double* gs, const Py_ssize_t* idx,
                              Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t i
    cdef double g0 = gs[idx[start]]
    for i in range(start + 1, end):
        if gs[idx[i]] != g0:
            return False
    return True


cdef class _Leaf:
    cdef public Py_ssize_t node_id, start, end, depth, feature, bin
    cdef public double gain, threshold


cdef void _hist_best(const int[:, ::1] codes, const double[::1] gv, const Py_ssize_t* idx,
                     Py_ssize_t start, Py_ssize_t end, const Py_ssize_t[::1] n_bins,
                     const double[:, ::1] bin_lower, const double[:, ::1] bin_upper,
                     Py_ssize_t min_leaf, double reg_lambda, double G,
                     double* hg, Py_ssize_t* hc, double* res_score,
                     Py_ssize_t* res_f, Py_ssize_t* res_b, double* res_thr) noexcept nogil:
    cdef Py_ssize_t n_features = codes.shape[1]
    cdef Py_ssize_t width = bin_lower.shape[1]
    cdef Py_ssize_t i, f, b, prev, r, nl, nr, cc
    cdef Py_ssize_t n_node = end - start
    cdef double cg, score, GL, GR, gi
    memset(hg, 0, n_features * width * sizeof(double))
    memset(hc, 0, n_features * width * sizeof(Py_ssize_t))
    for i in range(start, end):
        r = idx[i]
        gi = gv[r]
        for f in range(n_features):
            b = f * width + codes[r, f]
            hg[b] += gi
            hc[b] += 1
    res_score[0] = -INFINITY
    res_f[0] = -1
    res_b[0] = 0
    res_thr[0] = 0.0
    cdef double f_score, f_thr
    cdef Py_ssize_t f_b
    for f in range(n_features):
        cg = 0.0
        cc = 0
        prev = -1
        f_score = -INFINITY
        f_b = 0
        f_thr = 0.0
        for b in range(n_bins[f]):
            if hc[f * width + b] == 0:
                continue
            if prev >= 0:
                nl = cc
                nr = n_node - nl
                if nl >= min_leaf and nr >= min_leaf:
                    GL = cg
                    GR = G - GL
                    score = GL * GL / (<double> nl + reg_lambda) \
                        + GR * GR / (<double> nr + reg_lambda)
                    if score > f_score:
                        f_score = score
                        f_b = prev
                        f_thr = _midpoint(bin_upper[f, prev], bin_lower[f, b])
            cg += hg[f * width + b]
            cc += hc[f * width + b]
            prev = b
        if f_score > -INFINITY and (res_f[0] < 0 or _beats(f_score, res_score[0])):
            res_score[0] = f_score
            res_f[0] = f
            res_b[0] = f_b
            res_thr[0] = f_thr


def build_hist_tree(codes, n_bins, bin_lower, bin_upper, g, samples,
                    Py_ssize_t max_leaves, Py_ssize_t max_depth,
                    Py_ssize_t min_samples_leaf, double reg_lambda, double gamma):
    """Grow one leaf-wise tree over pre-binned features."""
    cdef const int[:, ::1] cv = np.ascontiguousarray(codes, dtype=np.int32)
    cdef const Py_ssize_t[::1] nbv = np.ascontiguousarray(n_bins, dtype=np.intp)
    cdef const double[:, ::1] lov = np.ascontiguousarray(bin_lower, dtype=np.float64)
    cdef const double[:, ::1] hiv = np.ascontiguousarray(bin_upper, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef cnp.ndarray samp = np.ascontiguousarray(samples, dtype=np.intp)
    cdef const Py_ssize_t[::1] sv = samp
    cdef Py_ssize_t n_samples = samp.shape[0]
    cdef Py_ssize_t n_features = cv.shape[1]
    cdef Py_ssize_t width = lov.shape[1]

    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(max(n_samples, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc(max(n_samples, 1) * sizeof(Py_ssize_t))
    cdef double* hg = <double*> malloc(max(n_features * width, 1) * sizeof(double))
    cdef Py_ssize_t* hc = <Py_ssize_t*> malloc(max(n_features * width, 1) * sizeof(Py_ssize_t))
    if not idx or not buf or not hg or not hc:
        free(idx); free(buf); free(hg); free(hc)
        raise MemoryError()

    cdef _NodeOut out = _NodeOut()
    cdef list open_leaves = []
    cdef Py_ssize_t i, j, k, n_left, n_leaves, start, end, mid
    cdef _Leaf leaf

    def add_node(Py_ssize_t start, Py_ssize_t end, Py_ssize_t depth):
        cdef Py_ssize_t n_node = end - start
        cdef double G = _node_sum(gv, idx, start, end)
        cdef Py_ssize_t node_id = out.add(-G / (n_node + reg_lambda))
        cdef double score, thr, gain
        cdef Py_ssize_t f, b
        cdef _Leaf lf
        if (max_depth >= 0 and depth >= max_depth) or n_node < 2 * min_samples_leaf \
                or n_node < 2 or _is_pure(gv, idx, start, end):
            return node_id
        _hist_best(cv, gv, idx, start, end, nbv, lov, hiv, min_samples_leaf,
                   reg_lambda, G, hg, hc, &score, &f, &b, &thr)
        if f < 0:
            return node_id
        gain = 0.5 * (score - G * G / (n_node + reg_lambda)) - gamma
        if gain > 0.0:
            lf = _Leaf()
            lf.node_id = node_id
            lf.start = start
            lf.end = end
            lf.depth = depth
            lf.gain = gain
            lf.feature = f
            lf.bin = b
            lf.threshold = thr
            open_leaves.append(lf)
        return node_id

    try:
        for i in range(n_samples):
            idx[i] = sv[i]
        add_node(0, n_samples, 0)
        n_leaves = 1
        while n_leaves < max_leaves and open_leaves:
            k = 0
            for i in range(1, len(open_leaves)):
                if (<_Leaf> open_leaves[i]).gain > (<_Leaf> open_leaves[k]).gain:
                    k = i
            leaf = open_leaves.pop(k)
            start = leaf.start
            end = leaf.end
            n_left = 0
            j = 0
            for i in range(start, end):
                if cv[idx[i], leaf.feature] <= leaf.bin:
                    idx[start + n_left] = idx[i]
                    n_left += 1
                else:
                    buf[j] = idx[i]
                    j += 1
            for i in range(j):
                idx[start + n_left + i] = buf[i]
            mid = start + n_left
            out.feature[leaf.node_id] = leaf.feature
            out.threshold[leaf.node_id] = leaf.threshold
            out.left[leaf.node_id] = add_node(start, mid, leaf.depth + 1)
            out.right[leaf.node_id] = add_node(mid, end, leaf.depth + 1)
            n_leaves += 1
    finally:
        free(idx); free(buf); free(hg); free(hc)

    return out.arrays()


def apply_tree(X, feature, threshold, left, right, value):
    """Route every row of ``X`` to its leaf and return the leaf values."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const Py_ssize_t[::1] fv = np.ascontiguousarray(feature, dtype=np.intp)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const Py_ssize_t[::1] lv = np.ascontiguousarray(left, dtype=np.intp)
    cdef const Py_ssize_t[::1] rv = np.ascontiguousarray(right, dtype=np.intp)
    cdef const double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef cnp.ndarray result = np.empty(n, dtype=np.float64)
    cdef double[::1] res = result
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while fv[node] >= 0:
                if Xv[i, fv[node]] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
            res[i] = vv[node]
    return result
