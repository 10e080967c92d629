"""Exception hierarchy shared by the calibration toolkit."""


class OrthocalError(Exception):
    """Base class for all toolkit errors."""


class OutOfReach(OrthocalError):
    """A Cartesian point cannot be reached by one or more legs."""

    def __init__(self, legs, radicands):
        self.legs = tuple(legs)
        self.radicands = tuple(radicands)
        detail = ", ".join(f"{leg} (radicand {r:.6g} mm^2)" for leg, r in zip(self.legs, self.radicands))
        super().__init__(f"point out of reach for leg(s): {detail}")


class SingularJoint(OrthocalError):
    """A prismatic joint sits at the origin, so the direct model divides by zero."""

    def __init__(self, legs):
        self.legs = tuple(legs)
        super().__init__(f"rho_i + drho_i = 0 for leg(s): {', '.join(self.legs)}")


class NoRealSolution(OrthocalError):
    """The direct-kinematics quadratic has a negative discriminant."""

    def __init__(self, discriminant):
        self.discriminant = float(discriminant)
        super().__init__(f"direct kinematics has no real solution (discriminant {discriminant:.6g})")


class Inconsistent(OrthocalError):
    """A (p, rho) pair violates the leg-length constraints."""


class SingularPosture(OrthocalError):
    """The parameter Jacobian cannot be formed at a singular configuration."""


class Unreachable(OrthocalError):
    """A calibration posture cannot be reached by the machine."""

    def __init__(self, posture, reason):
        self.posture = posture
        super().__init__(f"posture {posture} unreachable: {reason}")


class GaugeMiss(OrthocalError):
    """The leg no longer passes through the gauge station."""

    def __init__(self, leg, posture, mu):
        self.leg = leg
        self.posture = posture
        self.mu = float(mu)
        super().__init__(f"leg {leg} misses its gauge station at posture {posture} (mu = {mu:.4f})")


class IncompleteSet(OrthocalError):
    """A measurement set lacks some (leg, direction, sign) combinations."""

    def __init__(self, missing, duplicates=()):
        self.missing = tuple(missing)
        self.duplicates = tuple(duplicates)
        parts = []
        if self.missing:
            parts.append("missing " + ", ".join(map(_label, self.missing)))
        if self.duplicates:
            parts.append("duplicated " + ", ".join(map(_label, self.duplicates)))
        super().__init__("incomplete measurement set: " + "; ".join(parts))


class RankDeficient(OrthocalError):
    """The selected calibration columns do not have full rank."""

    def __init__(self, singular_values, threshold):
        self.singular_values = tuple(float(s) for s in singular_values)
        self.threshold = float(threshold)
        sv = ", ".join(f"{s:.3e}" for s in self.singular_values)
        super().__init__(f"rank deficient system (singular values {sv}; threshold {threshold:.3e})")


class DidNotConverge(OrthocalError):
    """Iterative refinement stopped without meeting its tolerance.

    The best iterate is kept on ``result`` so callers can still use it.
    """

    def __init__(self, result, message):
        self.result = result
        super().__init__(message)


def _label(key):
    leg, direction, sign = key
    axes = "xyz"
    return f"d{axes[direction]}_{axes[leg]}{sign}"
