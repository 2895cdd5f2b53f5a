# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: longest common subsequence and METEOR chunk alignment.

Mirrors ``_pykernels`` exactly, including search order and node budget, so
both implementations return identical results.
"""

from libc.stdlib cimport malloc, calloc, free

IMPLEMENTATION = "cython"
DEFAULT_NODE_LIMIT = 200_000
MAX_SEARCH_LENGTH = 800


def lcs_length(a, b):
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    if n == 0 or m == 0:
        return 0
    if m > n:
        a, b = b, a
        n, m = m, n
    cdef long *xa = <long *> malloc(n * sizeof(long))
    cdef long *xb = <long *> malloc(m * sizeof(long))
    cdef long *prev = <long *> calloc(m + 1, sizeof(long))
    cdef long *cur = <long *> calloc(m + 1, sizeof(long))
    cdef long *tmp
    cdef long x, result
    if xa == NULL or xb == NULL or prev == NULL or cur == NULL:
        free(xa); free(xb); free(prev); free(cur)
        raise MemoryError()
    try:
        for i in range(n):
            xa[i] = a[i]
        for j in range(m):
            xb[j] = b[j]
        for i in range(n):
            x = xa[i]
            cur[0] = 0
            for j in range(m):
                if x == xb[j]:
                    cur[j + 1] = prev[j] + 1
                elif cur[j] > prev[j + 1]:
                    cur[j + 1] = cur[j]
                else:
                    cur[j + 1] = prev[j + 1]
            tmp = prev
            prev = cur
            cur = tmp
        result = prev[m]
    finally:
        free(xa); free(xb); free(prev); free(cur)
    return result


def count_chunks(pairs):
    cdef long chunks = 0, li = -2, lj = -2, i, j
    for i, j in sorted(pairs):
        if i != li + 1 or j != lj + 1:
            chunks += 1
        li = i
        lj = j
    return chunks


cdef struct Search:
    long n
    long r
    long *hyp
    long *ref
    char *used
    long *need
    long *remaining
    long *pos_start   # per word: offset into pos_list
    long *pos_count
    long *pos_list
    long best
    long nodes
    long node_limit


cdef void _search(Search *s, long i, long chunks, long last_i, long last_j, long left) nogil:
    cdef long w, cont, k, j, step, n_order
    s.nodes += 1
    if left == 0:
        if chunks < s.best:
            s.best = chunks
        return
    if i == s.n or chunks >= s.best or s.nodes > s.node_limit:
        return
    w = s.hyp[i]
    s.remaining[w] -= 1
    if s.need[w] > 0:
        cont = last_j + 1 if last_i == i - 1 else -1
        if not (cont >= 0 and cont < s.r and s.used[cont] == 0 and s.ref[cont] == w):
            cont = -1
        # candidate order: the continuation first, then ascending ref positions
        n_order = s.pos_count[w] + (1 if cont >= 0 else 0)
        for k in range(n_order):
            if cont >= 0:
                if k == 0:
                    j = cont
                else:
                    j = s.pos_list[s.pos_start[w] + k - 1]
                    if j == cont:
                        continue
            else:
                j = s.pos_list[s.pos_start[w] + k]
            if s.used[j]:
                continue
            step = 0 if j == cont else 1
            if chunks + step >= s.best:
                continue
            s.used[j] = 1
            s.need[w] -= 1
            _search(s, i + 1, chunks + step, i, j, left - 1)
            s.need[w] += 1
            s.used[j] = 0
            if s.best <= 1 or s.nodes > s.node_limit:
                break
    if s.need[w] <= s.remaining[w]:
        _search(s, i + 1, chunks, last_i, last_j, left)
    s.remaining[w] += 1


cdef long _greedy_chunks(long *hyp, long n, long *ref, long r, char *hu, char *ru):
    # longest common run first; ties go to the leftmost hyp, then ref position
    cdef long i, j, k, best_len, best_i, best_j, chunks, last_i, last_j
    cdef long *match_of = <long *> malloc(n * sizeof(long))
    if match_of == NULL:
        return -1
    for i in range(n):
        match_of[i] = -1
    while True:
        best_len = 0
        best_i = -1
        best_j = -1
        for i in range(n):
            if hu[i]:
                continue
            for j in range(r):
                if ru[j] or hyp[i] != ref[j]:
                    continue
                k = 0
                while (i + k < n and j + k < r and hu[i + k] == 0 and ru[j + k] == 0
                       and hyp[i + k] == ref[j + k]):
                    k += 1
                if k > best_len:
                    best_len = k
                    best_i = i
                    best_j = j
        if best_len == 0:
            break
        for k in range(best_len):
            hu[best_i + k] = 1
            ru[best_j + k] = 1
            match_of[best_i + k] = best_j + k
    chunks = 0
    last_i = -2
    last_j = -2
    for i in range(n):
        j = match_of[i]
        if j < 0:
            continue
        if i != last_i + 1 or j != last_j + 1:
            chunks += 1
        last_i = i
        last_j = j
    free(match_of)
    return chunks


def align_chunks(hyp, ref, node_limit=DEFAULT_NODE_LIMIT):
    """Return ``(matches, chunks)``; see ``_pykernels.align_chunks``."""
    cdef long n = len(hyp), r = len(ref), i, j, w, vocab, matches = 0, greedy
    cdef Search s
    if n == 0 or r == 0:
        return 0, 0
    vocab = max(max(hyp), max(ref)) + 1
    s.n = n
    s.r = r
    s.hyp = <long *> malloc(n * sizeof(long))
    s.ref = <long *> malloc(r * sizeof(long))
    s.used = <char *> calloc(r + n, sizeof(char))
    s.need = <long *> calloc(vocab, sizeof(long))
    s.remaining = <long *> calloc(vocab, sizeof(long))
    s.pos_start = <long *> calloc(vocab, sizeof(long))
    s.pos_count = <long *> calloc(vocab, sizeof(long))
    s.pos_list = <long *> malloc(r * sizeof(long))
    cdef long *ref_count = <long *> calloc(vocab, sizeof(long))
    cdef long *fill = <long *> calloc(vocab, sizeof(long))
    cdef char *hu = <char *> calloc(n, sizeof(char))
    cdef char *ru = <char *> calloc(r, sizeof(char))
    try:
        if (s.hyp == NULL or s.ref == NULL or s.used == NULL or s.need == NULL
                or s.remaining == NULL or s.pos_start == NULL or s.pos_count == NULL
                or s.pos_list == NULL or ref_count == NULL or fill == NULL
                or hu == NULL or ru == NULL):
            raise MemoryError()
        for i in range(n):
            s.hyp[i] = hyp[i]
            s.remaining[s.hyp[i]] += 1
        for j in range(r):
            s.ref[j] = ref[j]
            ref_count[s.ref[j]] += 1
        for w in range(vocab):
            s.need[w] = s.remaining[w] if s.remaining[w] < ref_count[w] else ref_count[w]
            matches += s.need[w]
        if matches == 0:
            return 0, 0
        j = 0
        for w in range(vocab):
            s.pos_start[w] = j
            s.pos_count[w] = ref_count[w]
            j += ref_count[w]
        for j in range(r):
            w = s.ref[j]
            s.pos_list[s.pos_start[w] + fill[w]] = j
            fill[w] += 1
        greedy = _greedy_chunks(s.hyp, n, s.ref, r, hu, ru)
        if greedy < 0:
            raise MemoryError()
        s.best = greedy
        if greedy <= 1 or n > MAX_SEARCH_LENGTH:
            return matches, greedy
        s.nodes = 0
        s.node_limit = node_limit
        with nogil:
            _search(&s, 0, 0, -2, -2, matches)
        return matches, s.best
    finally:
        free(s.hyp); free(s.ref); free(s.used); free(s.need); free(s.remaining)
        free(s.pos_start); free(s.pos_count); free(s.pos_list)
        free(ref_count); free(fill); free(hu); free(ru)
