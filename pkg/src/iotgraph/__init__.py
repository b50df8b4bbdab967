"""Patch-based IoT network localization and topology extraction."""

from .model import NetworkSpec, Network, DistanceMeasurements, generate_network, \
    perturb_distances, mean_degree, comm_range_for_degree
from .patches import extract_patches, patch_alignment_graph
from .localize import classical_mds, refine_majorization, complete_distances, \
    localize_patch
from .sync import synchronize, landmark_align
from .metrics import CoordSet, localization_error, procrustes_align
from .anchored import build_chi_problem, solve_sdp_feasibility, stitch_global
from .power import PowerConfig, link_snr, initial_power_assignment
from .rateopt import RateInstance, solve_rate_allocation, error_probability_proxy
from .topology import extract_topology, lmst_topology, brute_force_power, \
    lyapunov_value, topology_metric
from .pipeline import ExperimentConfig, run_pipeline, sweep_and_summarize

__version__ = "0.1.0"
