"""Generates scattering.mesh: (-1,1)^2 minus D = {2|x| - 1/2 < y < |x|}.

Obstacle edges are tagged D, the outer square A. Requires numpy, scipy, shapely.
Usage: python gen_scattering_mesh.py [spacing] > scattering.mesh
"""

import sys

import numpy as np
from scipy.spatial import Delaunay
from shapely.geometry import Point, Polygon

OBSTACLE = [(0.0, -0.5), (0.5, 0.5), (0.0, 0.0), (-0.5, 0.5)]


def segments(poly, h):
    """Polygon boundary as consecutive point lists with spacing <= h."""
    out = []
    for i in range(len(poly)):
        a, b = np.array(poly[i]), np.array(poly[(i + 1) % len(poly)])
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h - 1e-9)))
        out.append([tuple(a + (b - a) * j / n) for j in range(n + 1)])
    return out


def main():
    h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.25
    obstacle = Polygon(OBSTACLE)
    square = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]

    segs = segments(OBSTACLE, h / 2) + segments(square, h)
    pts = {p for s in segs for p in s}
    n = int(round(2 / h))
    for i in range(1, n):
        for j in range(1, n):
            p = (-1 + i * h, -1 + j * h)
            if obstacle.exterior.distance(Point(p)) > 0.35 * h and not obstacle.contains(Point(p)):
                pts.add(p)

    constraints = [(s[j], s[j + 1]) for s in segs for j in range(len(s) - 1)]
    for _ in range(20):
        arr = np.array(sorted(pts))
        index = {tuple(p): i for i, p in enumerate(map(tuple, arr))}
        tri = Delaunay(arr)
        edges = set()
        for t in tri.simplices:
            for a in range(3):
                edges.add(frozenset((int(t[a]), int(t[(a + 1) % 3]))))
        missing = [(a, b) for a, b in constraints if frozenset((index[a], index[b])) not in edges]
        if not missing:
            break
        for a, b in missing:
            m = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
            pts.add(m)
            constraints.remove((a, b))
            constraints += [(a, m), (m, b)]
    else:
        raise SystemExit("could not recover obstacle edges")

    keep = []
    for t in tri.simplices:
        c = arr[t].mean(axis=0)
        if not obstacle.contains(Point(c)):
            p0, p1, p2 = arr[t]
            area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
            keep.append(list(t) if area > 0 else [t[0], t[2], t[1]])

    used = sorted({v for t in keep for v in t})
    renum = {v: i for i, v in enumerate(used)}
    tris = [[renum[v] for v in t] for t in keep]
    count = {}
    for t in tris:
        for a in range(3):
            e = tuple(sorted((t[a], t[(a + 1) % 3])))
            count[e] = count.get(e, 0) + 1
    boundary = []
    for (a, b), c in sorted(count.items()):
        if c != 1:
            continue
        pa, pb = arr[used[a]], arr[used[b]]
        mid = (pa + pb) / 2
        on_square = max(abs(mid[0]), abs(mid[1])) > 1 - 1e-12
        on_obstacle = obstacle.exterior.distance(Point(mid)) < 1e-12
        if on_square == on_obstacle:
            raise SystemExit(f"unexpected boundary edge {pa} {pb}")
        boundary.append((a, b, "A" if on_square else "D"))

    print(f"# (-1,1)^2 minus the obstacle 2|x1| - 1/2 < x2 < |x1|; spacing {h}")
    print(len(used), len(tris), len(boundary))
    for v in used:
        print(repr(float(arr[v][0])), repr(float(arr[v][1])))
    for t in tris:
        print(*t)
    for a, b, tag in boundary:
        print(a, b, tag)


if __name__ == "__main__":
    main()
