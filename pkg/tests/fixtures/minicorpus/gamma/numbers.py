def mean(xs):
    return sum(xs) / len(xs)


def scale(xs, k):
    return [x * k for x in xs]


def clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x
