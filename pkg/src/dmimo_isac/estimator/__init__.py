"""Two-stage multi-target position estimation: non-coherent scan and detection, then coherent refinement."""

from .model import (EchoSet, SensingSetup, hypothesis, mean_echo, position_jacobian, synthesize_echoes,
                    true_path_gains)
from .costs import (coherent_cost, coherent_cost_points, coherent_cost_printed, coherent_fit, coherent_objective,
                    ncp_cost, ncp_cost_points, ncp_fit, ncp_objective)
from .cfar import CFARConfig, ca_cfar_2d, glrt_statistic, glrt_threshold
from .detect import CostMap, Detection, GridConfig, refine_ncp, scan_and_detect
from .refine import EstimationReport, RefineConfig, position_errors, refine_coherent

__all__ = [
    "EchoSet", "SensingSetup", "hypothesis", "mean_echo", "position_jacobian", "synthesize_echoes",
    "true_path_gains", "coherent_cost", "coherent_cost_points", "coherent_cost_printed", "coherent_fit",
    "coherent_objective", "ncp_cost", "ncp_cost_points", "ncp_fit", "ncp_objective", "CFARConfig",
    "ca_cfar_2d", "glrt_statistic", "glrt_threshold", "CostMap", "Detection", "GridConfig", "refine_ncp",
    "scan_and_detect", "EstimationReport", "RefineConfig", "position_errors", "refine_coherent",
]
