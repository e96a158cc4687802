def split_pair(item):
    left, right = item.split("=")
    return left, right


def total(values):
    result = 0
    for v in values:
        result += v
    return result
