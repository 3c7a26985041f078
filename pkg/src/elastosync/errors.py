"""Exception types shared across the package."""


class DegenerateElementError(ValueError):
    """A tetrahedron has (near-)zero volume and cannot be used."""

    def __init__(self, elem_id, volume):
        self.elem_id = int(elem_id)
        self.volume = float(volume)
        super().__init__(f"degenerate element {elem_id}: volume={volume:.3e}")


class InstabilityError(RuntimeError):
    """Time integration produced non-finite displacements."""

    def __init__(self, step, rank=None):
        self.step = int(step)
        self.rank = rank
        where = f" on rank {rank}" if rank is not None else ""
        super().__init__(f"non-finite displacement detected at step {step}{where}")


class CommunicationError(RuntimeError):
    """A rank message did not arrive within the exchange timeout."""

    def __init__(self, rank, detail=""):
        self.rank = rank
        msg = f"communication failure involving rank {rank}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConvergenceError(RuntimeError):
    """An iterative solve exhausted its iteration cap."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch):
        self.epoch = int(epoch)
        super().__init__(f"training loss is non-finite at epoch {epoch}")


class ConfigError(ValueError):
    """A run-configuration file is malformed or out of range."""
