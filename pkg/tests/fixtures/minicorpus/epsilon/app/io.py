def read_config(path):
    with open(path) as fh:
        data = fh.read()
    lines = data.splitlines()
    name = lines[0].strip()
    size = int(lines[1])
    return name, size


def parse_flag(arg: str):
    # a comparison that decides a branch constrains the input
    if arg == "--verbose":
        return True
    return False


def join_words(words):
    return " ".join(words)


def first_char(s: str):
    return s[0]


def parse_range(spec):
    lo, hi = spec.split("-")
    return int(lo), int(hi)


def coords(text):
    x, y, z = text.rsplit(",", 2)
    return float(x), float(y), float(z)
