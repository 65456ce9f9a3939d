"""Brute-force reference implementations for the self-checks and tests.

They follow the written definitions with plain Python loops over lists
and share no code with the production modules.
"""

import itertools
import math


def knn(points, i, k):
    cand = sorted((math.hypot(points[j][0] - points[i][0], points[j][1] - points[i][1]), j)
                  for j in range(len(points)) if j != i)
    return {j for _, j in cand[:k]}


def invariant_neighbors(tracks, k_max):
    n = len(tracks)
    k = min(k_max, n - 1)
    out = []
    for i in range(n):
        common = None
        for f in range(len(tracks[0])):
            s = knn([t[f] for t in tracks], i, k) if k > 0 else set()
            common = s if common is None else common & s
        out.append(common or set())
    return out


def _cos(u, v):
    nu, nv = math.hypot(*u), math.hypot(*v)
    if nu == 0 or nv == 0:
        return 0.0
    return (u[0] * v[0] + u[1] * v[1]) / (nu * nv)


def _vel(track):
    return [(b[0] - a[0], b[1] - a[1]) for a, b in zip(track, track[1:])]


def correlation(ti, tj):
    vi, vj = _vel(ti), _vel(tj)
    return sum(_cos(a, b) for a, b in zip(vi, vj)) / len(vi)


def closure_groups(n, adj):
    """Warshall transitive closure, then groups ordered by smallest member."""
    reach = [[adj[i][j] or i == j for j in range(n)] for i in range(n)]
    for m in range(n):
        for i in range(n):
            for j in range(n):
                reach[i][j] = reach[i][j] or (reach[i][m] and reach[m][j])
    groups = []
    for i in range(n):
        comp = sorted(j for j in range(n) if reach[i][j])
        if comp not in groups:
            groups.append(comp)
    return sorted(groups)


def coherent_filter(tracks, k_max, threshold):
    n = len(tracks)
    inv = invariant_neighbors(tracks, k_max)
    adj = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and (j in inv[i] or i in inv[j]) and correlation(tracks[i], tracks[j]) > threshold:
                adj[i][j] = True
    labels = [-1] * n
    gid = 0
    for comp in closure_groups(n, adj):
        if len(comp) > 1:
            for m in comp:
                labels[m] = gid
            gid += 1
    return labels


def _angle(ti, tj):
    total = 0.0
    for a, b in zip(_vel(ti), _vel(tj)):
        c = max(-1.0, min(1.0, _cos(a, b)))
        total += math.acos(c)
    return total / (len(ti) - 1)


def _heading(track):
    dx = track[-1][0] - track[0][0]
    dy = track[-1][1] - track[0][1]
    norm = math.hypot(dx, dy)
    return (1.0, 0.0) if norm == 0 else (dx / norm, dy / norm)


def _inside(ti, tj, s_lat, s_lon):
    hx, hy = _heading(ti)
    dx, dy = tj[-1][0] - ti[-1][0], tj[-1][1] - ti[-1][1]
    lon = dx * hx + dy * hy
    lat = -dx * hy + dy * hx
    return abs(lat) <= s_lat and abs(lon) <= s_lon


def neighbor(ti, tj, theta, s_lat, s_lon):
    return _angle(ti, tj) <= theta and _inside(ti, tj, s_lat, s_lon) and _inside(tj, ti, s_lat, s_lon)


def dbscan(tracks, theta, s_lat, s_lon, min_pts):
    """Clusters as components of the core-point graph, numbered by their
    smallest core; a border point joins the earliest such cluster it touches."""
    m = len(tracks)
    nb = [[i == j or neighbor(tracks[i], tracks[j], theta, s_lat, s_lon) for j in range(m)] for i in range(m)]
    core = [sum(row) >= min_pts for row in nb]
    core_adj = [[core[i] and core[j] and nb[i][j] for j in range(m)] for i in range(m)]
    comps = [c for c in closure_groups(m, core_adj) if core[c[0]]]
    labels = [-1] * m
    for gid, comp in enumerate(comps):
        for i in comp:
            labels[i] = gid
    for i in range(m):
        if not core[i]:
            touching = [gid for gid, comp in enumerate(comps) if any(nb[i][c] for c in comp)]
            if touching:
                labels[i] = min(touching)
    return labels


def all_couplings(p, q):
    """Every monotone coupling path of a p x q lattice (small sizes only)."""
    def rec(i, j):
        if i == p - 1 and j == q - 1:
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < p and j + dj < q:
                for rest in rec(i + di, j + dj):
                    yield [(i, j)] + rest
    return list(rec(0, 0))


def frechet_enumerated(a, b):
    return min(max(math.dist(a[i], b[j]) for i, j in path) for path in all_couplings(len(a), len(b)))


def pairs(n):
    return list(itertools.combinations(range(n), 2))
