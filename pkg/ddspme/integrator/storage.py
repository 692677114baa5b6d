import json
import logging
from typing import List

import numpy as np
import pandas as pd

from ddspme import __version__
from ddspme.coefficients import ModelSpec
from ddspme.common import GridMismatchError, ProvenanceError, dump_json
from ddspme.config import CSV_FLOAT_FORMAT
from ddspme.integrator.grid import TimeGrid
from ddspme.integrator.noise_plan import NoisePlan
from ddspme.integrator.stepping import TrajectoryEnsemble
from ddspme.measures import MeasureFlow
from ddspme.spectral import NormSpace, SpectralOperator, norm_squared

LOGGER = logging.getLogger(__name__)


def save_trajectory(traj: TrajectoryEnsemble, prefix: str) -> List[str]:
    """
    Write <prefix>.npz (paths, times and the frozen flow if any) and the <prefix>.json sidecar.

    :return: the two file paths
    """
    arrays = {'paths': traj.paths, 'times': traj.grid.times}
    if traj.flow is not None:
        arrays['flow_times'] = traj.flow.times
        arrays['flow_particles'] = traj.flow.particles
    container = F"{prefix}.npz"
    sidecar = F"{prefix}.json"
    np.savez(container, **arrays)
    dump_json(sidecar, {
        'version': __version__,
        'model_hash': traj.model.digest(),
        'model': traj.model.model_dump(mode='json'),
        'noise': None if traj.noise is None else traj.noise.model_dump(mode='json'),
        'seed': None if traj.noise is None else traj.noise.seed,
        'grid': traj.grid.model_dump(mode='json'),
        'eps': traj.eps,
        'lam': traj.lam,
        'scheme': traj.scheme,
        'interacting': traj.interacting,
        'particle_offset': traj.particle_offset,
        'M': traj.M,
        'N': traj.N,
    })
    LOGGER.info('Saved %s particles x %s nodes to %s', traj.M, traj.paths.shape[0], container)
    return [container, sidecar]


def load_trajectory(prefix: str) -> TrajectoryEnsemble:
    with open(F"{prefix}.json", encoding='utf-8') as f:
        meta = json.load(f)
    model = ModelSpec.model_validate(meta['model'])
    if model.digest() != meta['model_hash']:
        raise ProvenanceError(F"model hash mismatch in {prefix}.json")
    grid = TimeGrid.model_validate(meta['grid'])
    with np.load(F"{prefix}.npz") as data:
        paths = data['paths']
        times = data['times']
        flow = None
        if 'flow_times' in data:
            flow = MeasureFlow(data['flow_times'], data['flow_particles'])
    if not np.array_equal(times, grid.times):
        raise GridMismatchError(F"stored times in {prefix}.npz disagree with the sidecar grid")
    noise = None if meta['noise'] is None else NoisePlan.model_validate(meta['noise'])
    return TrajectoryEnsemble(paths=paths, grid=grid, model=model, noise=noise, eps=meta['eps'], lam=meta['lam'],
                              scheme=meta['scheme'], flow=flow, particle_offset=meta['particle_offset'])


def ensemble_statistics(traj: TrajectoryEnsemble, op: SpectralOperator) -> pd.DataFrame:
    """Per-node ensemble means of the squared norms, particles reduced in index order."""
    l2 = norm_squared(op, NormSpace.L2, traj.paths)
    f12 = norm_squared(op, NormSpace.F12, traj.paths)
    dual = norm_squared(op, NormSpace.F12DUAL, traj.paths)
    return pd.DataFrame({
        'time': traj.grid.times,
        'mean_l2_sq': l2.mean(axis=1),
        'mean_f12_sq': f12.mean(axis=1),
        'mean_dual_sq': dual.mean(axis=1),
        'max_dual_sq': dual.max(axis=1),
        'mean_zero_mode': traj.paths[:, :, 0].mean(axis=1),
    })


def write_statistics(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path
