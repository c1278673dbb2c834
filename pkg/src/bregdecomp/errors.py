"""Exception types shared across the package."""


class BregdecompError(Exception):
    """Base class for all package errors."""


class NonConverged(BregdecompError):
    """An iterative solve hit its iteration cap above tolerance."""

    def __init__(self, message, iterations=None, gap=None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class Infeasible(BregdecompError):
    """No point satisfies the residual constraint within tolerance."""


class BracketFailure(BregdecompError):
    """Residual-vs-multiplier monotonicity violated during bisection."""


class DiscrepancyNeverMet(BregdecompError):
    """Inner Bregman loop exhausted its cap before reaching the threshold."""


class CertificateFailure(BregdecompError):
    """A candidate subgradient violated the defining inequality at probes."""


class ZeroSignal(BregdecompError):
    """Cross-correlation of a zero signal is undefined."""


class DegenerateReference(BregdecompError):
    """PSNR reference has zero dynamic range."""


class ConfigError(BregdecompError):
    """Invalid run configuration."""
