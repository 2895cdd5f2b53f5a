"""Pure-Python kernels: longest common subsequence and METEOR chunk alignment.

Sequences are lists of small non-negative ints (token ids).  The compiled
module ``_ckernels`` implements the same functions with identical results.
"""

from collections import Counter

IMPLEMENTATION = "python"
DEFAULT_NODE_LIMIT = 200_000
# recursion depth equals hypothesis length; longer inputs keep the greedy result
MAX_SEARCH_LENGTH = 800


def lcs_length(a, b):
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(cur[j] if cur[j] > prev[j + 1] else prev[j + 1])
        prev = cur
    return prev[-1]


def count_chunks(pairs):
    """Chunks in an alignment given as (hyp_pos, ref_pos) pairs."""
    chunks = 0
    last = None
    for i, j in sorted(pairs):
        if last is None or i != last[0] + 1 or j != last[1] + 1:
            chunks += 1
        last = (i, j)
    return chunks


def _greedy_alignment(hyp, ref):
    # longest common run first; ties go to the leftmost hyp, then ref position
    n, r = len(hyp), len(ref)
    hyp_used = [False] * n
    ref_used = [False] * r
    pairs = []
    while True:
        best_len = 0
        best_i = best_j = -1
        for i in range(n):
            if hyp_used[i]:
                continue
            for j in range(r):
                if ref_used[j] or hyp[i] != ref[j]:
                    continue
                k = 0
                while (i + k < n and j + k < r and not hyp_used[i + k] and not ref_used[j + k]
                       and hyp[i + k] == ref[j + k]):
                    k += 1
                if k > best_len:
                    best_len, best_i, best_j = k, i, j
        if best_len == 0:
            return pairs
        for k in range(best_len):
            hyp_used[best_i + k] = True
            ref_used[best_j + k] = True
            pairs.append((best_i + k, best_j + k))


def align_chunks(hyp, ref, node_limit=DEFAULT_NODE_LIMIT):
    """Return ``(matches, chunks)`` for a maximum one-to-one exact alignment.

    Among alignments with the maximum number of matches, the one with the
    fewest chunks is searched for by branch and bound, seeded with the
    greedy longest-run alignment.  The search stops after ``node_limit``
    nodes and keeps the best alignment found so far.
    """
    hc, rc = Counter(hyp), Counter(ref)
    matches = sum(min(c, rc[w]) for w, c in hc.items())
    if matches == 0:
        return 0, 0
    best = count_chunks(_greedy_alignment(hyp, ref))
    if best <= 1 or len(hyp) > MAX_SEARCH_LENGTH:
        return matches, best

    n = len(hyp)
    need = {w: min(c, rc[w]) for w, c in hc.items()}
    remaining = dict(hc)
    positions = {}
    for j, w in enumerate(ref):
        positions.setdefault(w, []).append(j)
    used = [False] * len(ref)
    nodes = 0
    state = {"best": best}

    def search(i, chunks, last_i, last_j, left):
        nonlocal nodes
        nodes += 1
        if left == 0:
            if chunks < state["best"]:
                state["best"] = chunks
            return
        if i == n or chunks >= state["best"] or nodes > node_limit:
            return
        w = hyp[i]
        remaining[w] -= 1
        if need[w] > 0:
            cont = last_j + 1 if last_i == i - 1 else -1
            order = positions[w]
            if cont >= 0 and cont < len(used) and not used[cont] and ref[cont] == w:
                order = [cont] + [j for j in order if j != cont]
            for j in order:
                if used[j]:
                    continue
                step = 0 if j == cont else 1
                if chunks + step >= state["best"]:
                    continue
                used[j] = True
                need[w] -= 1
                search(i + 1, chunks + step, i, j, left - 1)
                need[w] += 1
                used[j] = False
                if state["best"] <= 1 or nodes > node_limit:
                    break
        # skipping is allowed only while enough later occurrences remain
        if need[w] <= remaining[w]:
            search(i + 1, chunks, last_i, last_j, left)
        remaining[w] += 1

    search(0, 0, -2, -2, matches)
    return matches, state["best"]
