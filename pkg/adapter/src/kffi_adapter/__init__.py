"""Python guest kernel for the kffi broker.

Runs an eval/exec HTTP server, registers itself with a broker, and gives
Python cells transparent access to other kernels through kffi_call /
kffi_var / kffi_new / kffi_release plus remote-reference proxies.
"""

from .marshal import EncodedResult, Marshal, MarshalError, RemoteRef
from .runtime import BrokerUnreachable, ForeignCallError, GuestRuntime
from .server import AdapterServer

__version__ = "0.1.0"

__all__ = [
    "AdapterServer",
    "BrokerUnreachable",
    "EncodedResult",
    "ForeignCallError",
    "GuestRuntime",
    "Marshal",
    "MarshalError",
    "RemoteRef",
    "__version__",
]
