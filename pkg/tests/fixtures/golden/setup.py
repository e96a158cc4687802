def parse_version(s):
    return map(int, s.split('.'))
