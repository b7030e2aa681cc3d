"""Synchronization over Cartan motion groups via group contraction."""
from .contraction import (CartanFactors, CompactImage, cartan_decompose_opt, cartan_decompose_so,
                          homomorphism_residual, phi, phi_inverse, psi, psi_inverse)
from .errors import CartanSyncError
from .groups import (MMGElement, RigidMotion, compose, hybrid_distance, inverse, mat_exp, orth_log,
                     project_to_rotation, se_log, skew_embed)
from .harness import (NoiseSpec, make_measurements, mse, sample_ground_truth, snr_db,
                      spectral_gap_condition)
from .sync import (Edge, GroupSpec, MeasurementGraph, SyncSolution, choose_lambda, contraction_sync,
                   optimize_global_alignment, register_compact_solver, se_spectral_sync,
                   separation_sync, separation_sync_mmg, solve, spectral_sync_compact)

__version__ = "0.1.0"
