import numpy as np


def fd_noise(value: float, step: float = 1e-6) -> float:
    """Roundoff level of a central difference of a function whose value is ``value``."""
    return 10 * np.finfo(float).eps * max(1.0, abs(value)) / step


def grad_agreement(analytic: dict, numeric: dict, rtol: float = 1e-5, atol: float = 0.0):
    """Fraction of scalars with ``|a - f| <= rtol * max(|a|, |f|) + atol``.

    ``atol`` should be the roundoff level of the difference quotient
    (see :func:`fd_noise`); below it the numeric gradient carries no
    information.  Also returns the worst excess ratio for failure messages.
    """
    ok, total, worst = 0, 0, 0.0
    for k, fd in numeric.items():
        an = np.asarray(analytic[k]).reshape(fd.shape)
        err = np.abs(an - fd)
        bound = rtol * np.maximum(np.abs(an), np.abs(fd)) + atol
        ok += int(np.sum(err <= bound))
        total += err.size
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(err > 0, err / np.maximum(bound, 1e-300), 0.0)
        worst = max(worst, float(ratio.max()))
    return ok / total, worst


# one verdict line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

