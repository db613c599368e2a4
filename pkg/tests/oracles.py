"""Independent reference implementations used to check the package.

Nothing here imports from ``exactlen``; each oracle is the most literal
reading of its definition, in exact rational arithmetic where it matters.
"""

from fractions import Fraction


def split_count(text):
    """Whitespace-split word count, keeping only pieces with a letter or digit."""
    return sum(1 for piece in text.split() if any(ch.isalnum() for ch in piece))


def brute_em(pairs):
    hits = 0
    for target, achieved in pairs:
        if target == achieved:
            hits += 1
    return Fraction(hits, len(pairs))


def brute_mae(pairs):
    total = Fraction(0)
    for target, achieved in pairs:
        total += abs(achieved - target)
    return total / len(pairs)


def brute_mald(pairs):
    total = Fraction(0)
    for target, achieved in pairs:
        total += Fraction(abs(achieved - target), target)
    return total / len(pairs)


def countdown(tokens, open_="<", close=">"):
    """Build the reference countdown string by hand."""
    n = len(tokens)
    out = ""
    for i, tok in enumerate(tokens):
        out += open_ + str(n - i) + close + tok
    return out + open_ + "0" + close


def lcs_len(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]
