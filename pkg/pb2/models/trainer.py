from typing import Any, Mapping, Protocol, runtime_checkable


@runtime_checkable
class Trainer(Protocol):
    """What the scheduler needs from a trainable model.

    ``step`` advances one ``t_ready`` interval and returns the new absolute
    score F. ``clone`` must return a deep copy.
    """

    noise_std: float

    def init(self, seed: int, config: Mapping[str, float]) -> Any: ...

    def step(self, state: Any, config: Mapping[str, float]) -> tuple[Any, float]: ...

    def clone(self, state: Any) -> Any: ...

    def evaluate(self, state: Any) -> float: ...
