"""Two-server private submodel retrieval and secure aggregation from DPFs."""
from .analytics import CostModel, rate_basic, rate_mega, rate_udpf, reconcile
from .batch_code import TableSpec, build_cuckoo_table, build_simple_table, recommend_params
from .dpf import DpfKey, DpfParams, dpf_deserialize, dpf_eval, dpf_eval_full, dpf_gen, dpf_serialize
from .errors import (
    CuckooInsertionError,
    DomainError,
    FormatError,
    FslError,
    ParameterError,
    ProtocolError,
    SequencingError,
)
from .group import GroupParams, GroupVector
from .harness import RoundTranscript, Scenario, run_psr, run_round
from .kernels import BACKEND
from .udpf import ClientTrapdoor, Hint, UdpfKey, udpf_eval, udpf_eval_full, udpf_gen, udpf_next, udpf_update

__version__ = "0.1.0"
