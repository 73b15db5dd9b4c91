"""Built-in example systems with their default boxes and initial conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .system import system_from_dict

__all__ = ["BuiltinExample", "EXAMPLES", "get_example", "example_names", "is_builtin"]


@dataclass(frozen=True)
class BuiltinExample:
    name: str
    description: str
    kind: str
    definition: dict
    box: Optional[str]
    metric: str = "l1"
    rate: Optional[float] = None
    x0: Tuple[float, ...] = ()
    y0: Tuple[float, ...] = ()
    forcing: Optional[Tuple[str, ...]] = None
    period: Optional[float] = None
    ics: Tuple[Tuple[float, ...], ...] = field(default_factory=tuple)

    def build(self):
        return system_from_dict(self.definition, name=self.name)


EXAMPLES: Dict[str, BuiltinExample] = {
    ex.name: ex
    for ex in [
        BuiltinExample(
            name="ex1",
            description="bimodal PWS system with sliding on x2 = 0, l1 rate 4",
            kind="filippov",
            definition={
                "type": "filippov",
                "n": 2,
                "m": 0,
                "f_plus": ["-4*x1", "-9*x2 - x2^2 - 18"],
                "f_minus": ["-4*x1", "-9*x2 + x2^2 + 18"],
                "H": "x2",
            },
            box="-5:5,-5:5",
            rate=4.0,
            x0=(2.0, 2.0),
            y0=(3.0, -2.0),
        ),
        BuiltinExample(
            name="ex2",
            description="bimodal PWS system contracting in l1 for |x2| <= 9/8 with rate 1/2",
            kind="filippov",
            definition={
                "type": "filippov",
                "n": 2,
                "m": 0,
                "f_plus": ["-2*x1 - (2/9)*x2^2 + 2", "x1 - x2 - 3"],
                "f_minus": ["-2*x1 + (2/9)*x2^2 - 2", "x1 - x2 + 3"],
                "H": "x2",
            },
            box="-5:5,-1.125:1.125",
            rate=0.5,
            x0=(0.0, -1.0),
            y0=(0.0, -0.5),
        ),
        BuiltinExample(
            name="ex3",
            description="planar PWA system with input channel B = [0, 1]^T, l1 rate 1",
            kind="pwa",
            definition={
                "type": "pwa",
                "A1": [[-2.0, -1.0], [1.0, -3.0]],
                "A2": [[-2.0, -1.0], [1.0, -4.0]],
                "b1": [-1.0, -3.0],
                "b2": [2.0, 4.0],
                "h": [0.0, 1.0],
                "B": [[0.0], [1.0]],
            },
            box="-5:5,-5:5",
            rate=1.0,
            x0=(4.0, 4.0),
            y0=(3.0, -1.0),
            forcing=("6*sin(2*pi*t)",),
            period=1.0,
            ics=((4.0, 4.0), (3.0, -1.0), (0.0, 0.0)),
        ),
        BuiltinExample(
            name="ex4",
            description="planar relay feedback system x' = Ax - b sgn(c.x), l1 rate 1",
            kind="relay",
            definition={
                "type": "relay",
                "A": [[-2.0, -1.0], [1.0, -3.0]],
                "b": [1.0, 3.0],
                "c": [0.0, 1.0],
            },
            box="-5:5,-5:5",
            rate=1.0,
            x0=(2.0, 2.0),
            y0=(2.0, -2.0),
        ),
    ]
}


def example_names() -> List[str]:
    return sorted(EXAMPLES)


def is_builtin(name: str) -> bool:
    return name in EXAMPLES


def get_example(name: str) -> BuiltinExample:
    try:
        return EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown built-in example {name!r}; choose from {', '.join(example_names())}") from None


def build(name: str):
    """System object (FilippovSystem, PWASystem or RelaySystem) for a built-in."""
    return get_example(name).build()

