from ._backend import kernels
