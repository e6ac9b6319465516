"""Cluster-correlation expansion of central-spin decoherence in nuclear spin baths."""
__version__ = "0.1.0"

from .config import ConfigError, SimulationConfig, parse_config
from .clusters import ClusterSet, NeighborGraph, build_graph, enumerate_clusters
from .couplings import (DonorModelParams, contact_hyperfine_kl, cube_hyperfine, dipole_tensor,
                        donor_dipolar, donor_hyperfine, point_dipole_hyperfine)
from .engine import (AutocorrCurve, CCEConfig, CoherenceCurve, autocorrelation, cce_expand,
                     cluster_coherence_conventional, cluster_coherence_gcce, conventional_propagators,
                     gcce_propagator, run_bath_states, run_cce, run_exhaustive, run_mc_sampling)
from .fitting import FitError, T2Fit, fit_t2
from .hamiltonian import (BathState, CentralSpin, MeanField, central_eigensystem,
                          conventional_cluster_hamiltonian, gcce_cluster_hamiltonian, pt2_tensor)
from .isotopes import SpinType, isotope_lookup, spin_type
from .oracle import ExactModel, analytical_hahn_eseem, exact_coherence
from .pulses import Pulse, PulseSequence
from .spinops import ProductSpace, embed, expm_hermitian, mixed_state, spin_matrices
from .runner import run_job, run_scan
from .structure import (BathArray, UnitCell, VolumetricData, filter_r_bath, generate_bath,
                        parse_cube, parse_xyz)
from .tables import attach_tensors, format_tensor_table, parse_tensor_table
