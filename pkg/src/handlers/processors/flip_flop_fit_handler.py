import logging
import os
from handlers.abstract_handler import AbstractHandler
from drn.errors import ConfigError
from drn.kron_gauss import flip_flop_mle, mle_mean, normalize_identifiable
from drn.serialization import dumps, fit_result_to_dict

logger = logging.getLogger(__name__)


class FlipFlopFitHandler(AbstractHandler):
    """
    Fits a tensor normal distribution to request["samples"]: sample mean,
    flip-flop covariance, then trace-normalized factors plus one global scale.
    Tolerance and sweep limit come from DRN_FLIP_FLOP_TOL / DRN_FLIP_FLOP_MAX_ITER.
    """

    def handle(self, request: dict) -> dict:
        samples = self.require(request, "samples")
        tol, max_iter = self.settings()
        logger.info("Fitting tensor normal to %d samples (tol %g, at most %d sweeps)...", len(samples), tol, max_iter)

        mean = mle_mean(samples)
        result = flip_flop_mle(samples, mean, tol=tol, max_iter=max_iter)
        factors, scale = normalize_identifiable(result.covariance)
        if result.converged:
            logger.info("Converged after %d sweeps, log-likelihood %.12g", result.iterations, result.log_likelihood)
        else:
            logger.warning("No convergence within %d sweeps", max_iter)

        request.update(
            {
                "fit": result,
                "converged": result.converged,
                "text": dumps(fit_result_to_dict(mean, factors, scale, result)),
            }
        )
        return super().handle(request)

    @staticmethod
    def settings():
        try:
            tol = float(os.getenv("DRN_FLIP_FLOP_TOL", "1e-8"))
            max_iter = int(os.getenv("DRN_FLIP_FLOP_MAX_ITER", "200"))
        except ValueError as e:
            raise ConfigError(f"bad flip-flop setting in the environment: {e}") from e
        if not tol > 0 or max_iter < 1:
            raise ConfigError("DRN_FLIP_FLOP_TOL must be positive and DRN_FLIP_FLOP_MAX_ITER at least 1")
        return tol, max_iter
