"""Independent exact-arithmetic oracle for per-stage stationary laws.

Uses only the detailed-balance recurrence pi_{j+1} = pi_j * q / v(j+1)
with Fraction arithmetic and a long explicit sum for the normalizer —
no logs, no closed forms — so it cross-checks the library route.
Run to print reference values that get frozen into tests.
"""

from fractions import Fraction


def throttle_frac(x: int, sigma: int) -> Fraction:
    if x <= 0:
        return Fraction(0)
    if x >= sigma:
        return Fraction(1)
    return Fraction(x, sigma)


def unnormalized_weights(c0, c, sigma, terms):
    q = Fraction(c0) / Fraction(c)
    w = [Fraction(1)]
    for j in range(terms - 1):
        w.append(w[-1] * q / throttle_frac(j + 1, sigma))
    return w


def pmf(c0, c, sigma, terms=4000):
    w = unnormalized_weights(c0, c, sigma, terms)
    # geometric remainder beyond the last term (ratio q since terms >> sigma)
    q = Fraction(c0) / Fraction(c)
    z = sum(w) + w[-1] * q / (1 - q)
    return [x / z for x in w], z


def moment(c0, c, sigma, n, terms=4000):
    p, _ = pmf(c0, c, sigma, terms)
    return sum(Fraction(j) ** n * pj for j, pj in enumerate(p))


if __name__ == "__main__":
    # ratios for sigma=3, c0=6, c=10
    w = unnormalized_weights(6, 10, 3, 10)
    print("sigma=3 c0=6 c=10  w1/w0 =", w[1] / w[0], "=", float(w[1] / w[0]))
    print("sigma=3 c0=6 c=10  w2/w0 =", w[2] / w[0], "=", float(w[2] / w[0]))
    # geometric law for sigma=1
    p1, z1 = pmf(6, 10, 1)
    print("sigma=1 c0=6 c=10  pi_0 =", float(p1[0]), " pi_3 =", float(p1[3]),
          " 0.4*0.6^3 =", 0.4 * 0.6 ** 3)
    print("sigma=1 mean =", float(moment(6, 10, 1, 1)))
    # moment table used by the tests (exact fractions -> float)
    for sigma in (1, 3, 5):
        for c0x10 in (3, 6, 9):
            m1 = moment(c0x10, 10, sigma, 1)
            m2 = moment(c0x10, 10, sigma, 2)
            m3 = moment(c0x10, 10, sigma, 3)
            print(f"sigma={sigma} q=0.{c0x10}: m1={float(m1)!r} "
                  f"m2={float(m2)!r} m3={float(m3)!r} var={float(m2 - m1 * m1)!r}")
    # normalizer example frozen into tests
    _, z3 = pmf(6, 10, 3)
    print("sigma=3 c0=6 c=10  Z =", float(z3))
