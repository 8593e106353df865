"""Binary quadratic forms, imaginary class groups and Pell equations."""

from math import gcd, isqrt

from .abelian import abelian_structure
from .errors import BadInput


def is_discriminant(D):
    return D % 4 in (0, 1) and not is_square(D)


def is_square(n):
    return n >= 0 and isqrt(n) ** 2 == n


def reduce_form(form):
    """Reduced representative of a positive definite form (a, b, c)."""
    a, b, c = form
    if a <= 0 or b * b - 4 * a * c >= 0:
        raise BadInput(f"{form} is not positive definite")
    while True:
        if c < a or (c == a and b < 0):
            a, b, c = c, -b, a
            continue
        if -a < b <= a:
            break
        # b -> b + 2ka with k chosen to land in (-a, a]
        k = (a - b) // (2 * a)
        b2 = b + 2 * k * a
        c = (b2 * b2 - (b * b - 4 * a * c)) // (4 * a)
        b = b2
    if a == c and b < 0:
        b = -b
    return (a, b, c)


def reduced_forms(D):
    """All reduced primitive forms of negative discriminant D."""
    if D >= 0 or D % 4 not in (0, 1):
        raise BadInput(f"{D} is not a negative discriminant")
    out = []
    a = 1
    while 3 * a * a <= -D:
        for b in range(-a + 1, a + 1):
            if (b * b - D) % (4 * a):
                continue
            c = (b * b - D) // (4 * a)
            if c < a or (c == a and b < 0):
                continue
            if gcd(gcd(a, b), c) != 1:
                continue
            out.append((a, b, c))
        a += 1
    return sorted(out)


def principal_form(D):
    r = D % 2
    return reduce_form((1, r, (r * r - D) // 4))


def _ext_gcd(a, b):
    if b == 0:
        return (1 if a >= 0 else -1), 0, abs(a)
    x0, y0, g = _ext_gcd(b, a % b)
    return y0, x0 - (a // b) * y0, g


def compose(f1, f2):
    """Dirichlet composition of primitive forms of the same discriminant, reduced."""
    a1, b1, c1 = f1
    a2, b2, c2 = f2
    D = b1 * b1 - 4 * a1 * c1
    if b2 * b2 - 4 * a2 * c2 != D:
        raise BadInput("forms have different discriminants")
    s = (b1 + b2) // 2
    # u*a1 + v*a2 + w*s = e with e = gcd(a1, a2, s); only v and w are needed
    _, v1, g1 = _ext_gcd(a1, a2)
    u2, w, e = _ext_gcd(g1, s)
    v = u2 * v1
    a3 = a1 * a2 // (e * e)
    b3 = b2 + 2 * (a2 // e) * (v * (s - b2) - w * c2)
    b3 %= 2 * a3
    c3 = (b3 * b3 - D) // (4 * a3)
    return reduce_form((a3, b3, c3))


def class_group_imag(D):
    """The form class group of discriminant D < 0 as (G, log, exp)."""
    forms = reduced_forms(D)
    identity = principal_form(D)
    return abelian_structure(forms, compose, identity, target_order=len(forms))


def prime_form(D, p, r):
    """Form of the prime ideal (p, omega - r) with omega^2 + B omega + A = 0."""
    B = D % 2 and -1 or 0
    A = (B * B - D) // 4
    a, b, c = p, -(2 * r + B), (r * r + B * r + A) // p
    if b * b - 4 * a * c != D:
        raise BadInput(f"{r} is not a root of the minimal polynomial mod {p}")
    return reduce_form((a, b, c))


def pell_fundamental(d):
    """Minimal positive solution of x^2 - d y^2 = +-1 via the continued fraction of sqrt d."""
    if d <= 1 or is_square(d):
        raise BadInput(f"d = {d} must be a positive non-square")
    a0 = isqrt(d)
    m, q, a = 0, 1, a0
    p_prev, p_cur = 1, a0
    q_prev, q_cur = 0, 1
    while p_cur * p_cur - d * q_cur * q_cur not in (1, -1):
        m = a * q - m
        q = (d - m * m) // q
        a = (a0 + m) // q
        p_prev, p_cur = p_cur, a * p_cur + p_prev
        q_prev, q_cur = q_cur, a * q_cur + q_prev
    return p_cur, q_cur
