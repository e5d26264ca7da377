"""Flat parameter pack handed to the compiled / numpy kernel backends.

The pack encodes one endomorphism model as plain arrays so both backends can
evaluate lifts, frame derivatives and displacement components without touching
Python objects in inner loops.
"""
from dataclasses import dataclass

import numpy as np

from ..bump import RAMP_T, smoothstep

KIND_LINEAR = 0
KIND_MANE_SC = 1
KIND_NONSPECIAL = 2
KIND_MANE_CU = 3

# params vector layout (float64)
I_KIND = 0
I_A = 1          # 1..4 row-major A
I_MU_S = 5
I_MU_U = 6
I_P = 7          # 7..10 row-major P = [e_s | e_u]
I_PINV = 11      # 11..14
I_DEGREE = 15
I_AINV = 16      # 16..19 row-major float inverse of A
I_HAS_DS = 20    # 1.0 if the frame displacement has an e_s component
I_HAS_DU = 21
I_LAM = 22       # mane_sc / nonspecial
I_KBUMP = 23
I_R = 24
I_SHEAR = 25     # nonspecial only
I_CX = 26
I_CY = 27
I_RHO_S = 28
I_RHO_U = 29
I_WPLAT = 30
I_NU = 31        # mane_cu only
I_P_RISE = 32
I_Q_EDGE = 33
I_D_DIP = 34
N_PARAMS = 35

_NT = len(RAMP_T) - 1
RAMP_S = np.array([smoothstep(i / _NT) for i in range(_NT + 1)])


@dataclass
class ModelPack:
    """Arrays consumed by the kernel backends."""

    params: np.ndarray    # float64 [N_PARAMS]
    reps: np.ndarray      # int64 [degree, 2] coset reps of Z^2 / A Z^2
    uinv: np.ndarray      # int64 2x2, inverse of the Smith U factor
    snf_diag: np.ndarray  # int64 [2]
    adj_a: np.ndarray     # int64 2x2 adjugate of A
    det_a: int

    @property
    def degree(self):
        return int(self.params[I_DEGREE])


def base_params(kind, spec):
    """Common slots for a model over the hyperbolic linearization ``spec``."""
    p = np.zeros(N_PARAMS)
    p[I_KIND] = float(kind)
    a = spec.matrix.as_array()
    p[I_A:I_A + 4] = a.ravel()
    p[I_MU_S] = spec.mu_s
    p[I_MU_U] = spec.mu_u
    pm, pinv = spec.frame()
    p[I_P:I_P + 4] = pm.ravel()
    p[I_PINV:I_PINV + 4] = pinv.ravel()
    p[I_DEGREE] = float(spec.degree)
    p[I_AINV:I_AINV + 4] = np.linalg.inv(a).ravel()
    return p


def finish_pack(params, spec):
    from ..linear_model import coset_index_map

    mat = spec.matrix.as_int_array()
    index_of, reps = coset_index_map(mat)
    from ..linear_model import smith_normal_form

    u, s, _ = smith_normal_form(mat)
    det_u = int(round(np.linalg.det(u)))
    uinv = np.array([[u[1, 1], -u[0, 1]], [-u[1, 0], u[0, 0]]], dtype=np.int64) * det_u
    adj_a = np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]], dtype=np.int64)
    return ModelPack(
        params=params,
        reps=reps.astype(np.int64),
        uinv=uinv,
        snf_diag=np.array([abs(int(s[0, 0])), abs(int(s[1, 1]))], dtype=np.int64),
        adj_a=adj_a,
        det_a=int(mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]),
    )
