"""Planar geometry on tuples."""

import math


def dist(p, q):
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.hypot(dx, dy)


def polygon_area(points):
    acc = 0.0
    size = len(points)
    for idx in range(size):
        x1, y1 = points[idx]
        x2, y2 = points[(idx + 1) % size]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2


def perimeter(points):
    total = 0.0
    for idx, point in enumerate(points):
        total += dist(point, points[(idx + 1) % len(points)])
    return total


def cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower = []
    for pt in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], pt) <= 0:
            lower.pop()
        lower.append(pt)
    upper = []
    for pt in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], pt) <= 0:
            upper.pop()
        upper.append(pt)
    return lower[:-1] + upper[:-1]


def centroid(points):
    sx = sum(p[0] for p in points)
    sy = sum(p[1] for p in points)
    count = len(points)
    return (sx / count, sy / count)


def rotate(point, angle):
    rad = math.radians(angle)
    cos = math.cos(rad)
    sin = math.sin(rad)
    x, y = point
    return (round(x * cos - y * sin, 9), round(x * sin + y * cos, 9))


def closest_pair(points):
    best = None
    pair = None
    for i, left in enumerate(points):
        for right in points[i + 1:]:
            gap = dist(left, right)
            if best is None or gap < best:
                best = gap
                pair = (left, right)
    return pair, best


def inside(point, poly):
    x, y = point
    hit = False
    count = len(poly)
    for idx in range(count):
        ax, ay = poly[idx]
        bx, by = poly[(idx + 1) % count]
        if (ay > y) != (by > y):
            cut = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < cut:
                hit = not hit
    return hit


def bounding_box(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (min(xs), min(ys), max(xs), max(ys))


def main():
    square = [(0, 0), (4, 0), (4, 4), (0, 4)]
    assert polygon_area(square) == 16
    assert perimeter(square) == 16
    cloud = [(0, 0), (1, 1), (2, 2), (2, 0), (0, 2), (1, 3), (3, 1)]
    hull = convex_hull(cloud)
    print("hull", hull)
    assert (1, 1) not in hull
    print("centroid", centroid(square))
    assert rotate((1, 0), 90) == (0.0, 1.0)
    pair, gap = closest_pair(cloud)
    print("closest", pair, round(gap, 4))
    assert inside((2, 2), square) and not inside((5, 1), square)
    print("box", bounding_box(cloud))
    print("area", polygon_area(hull))


if __name__ == "__main__":
    main()
