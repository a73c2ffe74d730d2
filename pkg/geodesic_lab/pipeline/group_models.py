import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import mpmath
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DomainError, NonDiscreteGroupError, NotHyperbolicError
from .util import get_mp_dps, get_word_cap, get_worker_count

logger = logging.getLogger("geodesic_lab")

LENGTH_TOLERANCE = 1e-9
DET_TOLERANCE = 1e-12
# Words longer than this get their trace recomputed in extended precision
EXTENDED_PRECISION_WORD_LENGTH = 20

BOLZA_LETTERS = "abcdABCD"
MODULAR_LETTERS = "LR"


class Matrix2:
    """Element of PSL(2, R). Entries may be floats or mpmath reals."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d, check: bool = True):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        if check:
            scale = max(1.0, max(abs(float(v)) for v in (a, b, c, d))) ** 2
            if abs(float(self.det() - 1)) > DET_TOLERANCE * scale:
                raise DomainError(f"Matrix determinant {float(self.det())!r} is not 1")

    def __setattr__(self, name, value):
        raise AttributeError("Matrix2 is immutable")

    def __repr__(self) -> str:
        return f"Matrix2({self.a!r}, {self.b!r}, {self.c!r}, {self.d!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix2):
            return NotImplemented
        return self.normalized().entries() == other.normalized().entries()

    def __hash__(self) -> int:
        # M and -M are one element of PSL(2, R)
        return hash(tuple(float(v) for v in self.normalized().entries()))

    def __matmul__(self, other: "Matrix2") -> "Matrix2":
        return Matrix2(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
            check=False,
        )

    def entries(self) -> Tuple[Any, Any, Any, Any]:
        return (self.a, self.b, self.c, self.d)

    def det(self):
        return self.a * self.d - self.b * self.c

    @property
    def trace(self):
        return self.a + self.d

    def inverse(self) -> "Matrix2":
        return Matrix2(self.d, -self.b, -self.c, self.a, check=False)

    def normalized(self) -> "Matrix2":
        """Projective representative: trace >= 0, ties broken by first nonzero entry > 0"""
        t = self.trace
        flip = t < 0
        if t == 0:
            first = next((v for v in self.entries() if v != 0), 0)
            flip = first < 0
        if flip:
            return Matrix2(-self.a, -self.b, -self.c, -self.d, check=False)
        return self

    def is_hyperbolic(self, eps: float = 1e-12) -> bool:
        return abs(float(self.trace)) > 2 + eps

    def projectively_close(self, other: "Matrix2", rel_tol: float = 1e-6) -> bool:
        mine = [float(v) for v in self.entries()]
        theirs = [float(v) for v in other.entries()]
        scale = max(1.0, max(abs(v) for v in mine + theirs))
        same = max(abs(p - q) for p, q in zip(mine, theirs))
        opposite = max(abs(p + q) for p, q in zip(mine, theirs))
        return min(same, opposite) <= rel_tol * scale


class GeneratorSet(BaseModel):
    """Generators (followed by their inverses) of a Fuchsian group."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model: Literal["bolza", "modular"] = Field(description="Group model label")
    generators: Tuple[Matrix2, ...] = Field(description="Generators then inverses, float entries")
    precise: Tuple[Tuple[Any, Any, Any, Any], ...] = Field(
        default=(), description="mpmath entries parallel to generators"
    )
    letters: str = Field(description="One display letter per generator index")
    genus: int = Field(ge=0, description="Genus of the quotient surface")
    area: float = Field(gt=0, description="Hyperbolic area of the quotient")
    relator: Tuple[int, ...] = Field(default=(), description="Defining relator as generator indices")

    @model_validator(mode="after")
    def check_group(self):
        if len(self.letters) != len(self.generators):
            raise ValueError("one letter per generator required")
        if self.model == "bolza":
            if any(not g.is_hyperbolic() for g in self.generators):
                raise ValueError("compact model needs hyperbolic generators")
            if self.genus >= 2 and abs(self.area - 4 * math.pi * (self.genus - 1)) > 1e-9:
                raise ValueError("area violates Gauss-Bonnet")
        return self

    @property
    def rank(self) -> int:
        """Number of generators without inverses"""
        return len(self.generators) // 2 if self.model == "bolza" else len(self.generators)

    def inverse_index(self, index: int) -> int:
        return (index + self.rank) % len(self.generators)

    def word_matrix(self, word: Sequence[int]) -> Matrix2:
        result = Matrix2(1.0, 0.0, 0.0, 1.0, check=False)
        for index in word:
            result = result @ self.generators[index]
        return result

    def word_trace_precise(self, word: Sequence[int], dps: Optional[int] = None) -> float:
        """|trace| of a word product evaluated with mpmath"""
        if not self.precise:
            return abs(float(self.word_matrix(word).trace))
        with mpmath.workdps(dps or get_mp_dps()):
            a, b, c, d = mpmath.mpf(1), mpmath.mpf(0), mpmath.mpf(0), mpmath.mpf(1)
            for index in word:
                p, q, r, s = self.precise[index]
                a, b, c, d = a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s
            return abs(float(a + d))

    def format_word(self, word: Sequence[int]) -> str:
        return "".join(self.letters[i] for i in word)


class EnumerationOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    word_cap: Optional[int] = Field(default=None, ge=1, description="Word length cap; env default when unset")
    length_tolerance: float = Field(default=LENGTH_TOLERANCE, gt=0)
    workers: Optional[int] = Field(default=None, ge=1, description="Thread count; LAB_WORKERS when unset")
    mp_dps: Optional[int] = Field(default=None, ge=16, description="mpmath digits; LAB_MP_DPS when unset")


class PrimitiveClass(BaseModel):
    model_config = ConfigDict(frozen=True)

    trace: float = Field(gt=2, description="|trace| of a representative")
    length: float = Field(gt=0, description="Translation length 2 arccosh(trace/2)")
    norm: float = Field(gt=1, description="exp(length)")
    multiplicity: int = Field(ge=1, description="Number of classes sharing this length")
    word: Optional[str] = Field(default=None, description="Representative word, when known")

    @model_validator(mode="after")
    def check_length(self):
        if abs(self.length - 2.0 * math.acosh(self.trace / 2.0)) > 1e-12 * max(1.0, self.length):
            raise ValueError("length inconsistent with trace")
        if abs(self.norm - math.exp(self.length)) > 1e-12 * self.norm:
            raise ValueError("norm inconsistent with length")
        return self

    @classmethod
    def from_trace(cls, trace: float, multiplicity: int, word: Optional[str] = None) -> "PrimitiveClass":
        length = trace_to_length(trace)
        return cls(trace=float(trace), length=length, norm=math.exp(length),
                   multiplicity=multiplicity, word=word)


class LengthSpectrum(BaseModel):
    model_config = ConfigDict(frozen=True)

    classes: Tuple[PrimitiveClass, ...] = Field(description="Sorted by length, merged multiplicities")
    norm_bound: float = Field(ge=1, description="Norm bound of the enumeration")
    model: str = Field(description="Group model provenance")
    complete: bool = Field(description="Guaranteed complete up to norm_bound")
    options: Dict[str, Any] = Field(default_factory=dict, description="Enumeration provenance")

    @model_validator(mode="after")
    def check_classes(self):
        lengths = [c.length for c in self.classes]
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValueError("class lengths must be strictly increasing")
        if self.complete and any(c.norm > self.norm_bound * (1 + 1e-12) for c in self.classes):
            raise ValueError("complete spectrum holds a norm above its bound")
        return self

    @property
    def class_count(self) -> int:
        return sum(c.multiplicity for c in self.classes)

    @property
    def systole(self) -> Optional[float]:
        return self.classes[0].length if self.classes else None


def trace_to_length(t: float) -> float:
    """Translation length 2 arccosh(t/2) of a hyperbolic element with |trace| t"""
    t = float(t)
    if t < 0:
        raise DomainError(f"trace must be normalized to >= 0, got {t!r}")
    if t < 2:
        raise NotHyperbolicError(f"not hyperbolic: trace {t!r} < 2")
    if t == 2:
        return 0.0
    return 2.0 * math.acosh(t / 2.0)


def trace_to_norm(t: float) -> float:
    """Algebraic norm ((t + sqrt(t^2 - 4)) / 2)^2"""
    t = float(t)
    if t < 2:
        raise NotHyperbolicError(f"not hyperbolic: trace {t!r} < 2")
    return ((t + math.sqrt(t * t - 4.0)) / 2.0) ** 2


def is_primitive(word: Sequence) -> bool:
    """True iff the word is not a proper power of a shorter word"""
    n = len(word)
    if n == 0:
        return False
    seq = tuple(word)
    for period in range(1, n):
        if n % period == 0 and seq == seq[:period] * (n // period):
            return False
    return True


def bolza_generators(dps: Optional[int] = None) -> GeneratorSet:
    """Side pairings of the regular octagon with vertex angle pi/4 (genus 2)"""
    precise = []
    with mpmath.workdps(dps or get_mp_dps()):
        alpha = 1 + mpmath.sqrt(2)
        beta = mpmath.sqrt(2 + 2 * mpmath.sqrt(2))
        forward = []
        for k in range(4):
            theta = k * mpmath.pi / 4
            cos_t, sin_t = mpmath.cos(theta), mpmath.sin(theta)
            forward.append((alpha + beta * cos_t, -beta * sin_t, -beta * sin_t, alpha - beta * cos_t))
        inverses = [(d, -b, -c, a) for a, b, c, d in forward]
        precise = forward + inverses

    generators = tuple(Matrix2(*(float(v) for v in entries)) for entries in precise)
    return GeneratorSet(
        model="bolza",
        generators=generators,
        precise=tuple(precise),
        letters=BOLZA_LETTERS,
        genus=2,
        area=4 * math.pi,
        # a B c D A b C d
        relator=(0, 5, 2, 7, 4, 1, 6, 3),
    )


def modular_generators() -> GeneratorSet:
    """L = [[1,1],[0,1]] and R = [[1,0],[1,1]] generating the positive monoid of PSL(2, Z)"""
    return GeneratorSet(
        model="modular",
        generators=(Matrix2(1.0, 1.0, 0.0, 1.0), Matrix2(1.0, 0.0, 1.0, 1.0)),
        letters=MODULAR_LETTERS,
        genus=0,
        area=math.pi / 3,
    )


def enumerate_length_spectrum(
    gens: GeneratorSet,
    norm_bound: float,
    opts: Optional[EnumerationOptions] = None,
) -> LengthSpectrum:
    """
    Every primitive hyperbolic class with N(P) <= norm_bound, merged by length.

    The modular group goes through the necklace count at the matching integer
    trace bound; the Bolza surface through the octagon chord search.

    Returns:
        LengthSpectrum marked incomplete when the word cap stopped the search early.
    """
    if not norm_bound > 1:
        raise DomainError(f"norm_bound must exceed 1, got {norm_bound!r}")
    opts = opts or EnumerationOptions()

    if gens.model == "modular":
        root = math.sqrt(norm_bound)
        trace_bound = int(math.floor(root + 1.0 / root + 1e-9))
        spectrum = modular_necklace_spectrum(trace_bound, word_cap=opts.word_cap, workers=opts.workers)
        kept = tuple(c for c in spectrum.classes if c.norm <= norm_bound * (1 + 1e-12))
        return spectrum.model_copy(update={"classes": kept, "norm_bound": float(norm_bound)})

    return _BolzaEnumerator(gens, norm_bound, opts).run()


class _Octagon:
    """Fundamental octagon in the Klein model; vertices counter-clockwise."""

    def __init__(self):
        euclidean = 2 ** -0.25
        radius = 2 * euclidean / (1 + euclidean * euclidean)
        self.vertices = [
            (radius * math.cos((2 * j + 1) * math.pi / 8), radius * math.sin((2 * j + 1) * math.pi / 8))
            for j in range(8)
        ]
        self.edges = []
        for j in range(8):
            ax, ay = self.vertices[j]
            bx, by = self.vertices[(j + 1) % 8]
            nx, ny = -(by - ay), bx - ax
            self.edges.append((ax, ay, nx, ny, math.hypot(nx, ny)))

    def clip(self, p, q):
        """Cyrus-Beck clip of the chord p-q; None when it misses the octagon"""
        t_enter, t_exit = 0.0, 1.0
        dx, dy = q[0] - p[0], q[1] - p[1]
        for ax, ay, nx, ny, _ in self.edges:
            num = nx * (p[0] - ax) + ny * (p[1] - ay)
            den = nx * dx + ny * dy
            if abs(den) < 1e-12:
                if num < -1e-10:
                    return None
                continue
            t = -num / den
            if den > 0:
                t_enter = max(t_enter, t)
            else:
                t_exit = min(t_exit, t)
        if t_enter >= t_exit:
            return None
        return ((p[0] + t_enter * dx, p[1] + t_enter * dy), (p[0] + t_exit * dx, p[1] + t_exit * dy))

    def sides_through(self, point) -> set:
        sides = set()
        for j, (ax, ay, nx, ny, norm) in enumerate(self.edges):
            if abs((nx * (point[0] - ax) + ny * (point[1] - ay)) / norm) < 1e-9:
                sides.add(j)
        return sides


def _boundary_point(x: float) -> Tuple[float, float]:
    # Real line (plus infinity) onto the unit circle, matching the generator conversion
    if math.isinf(x):
        return (1.0, 0.0)
    q = x * x + 1.0
    return ((x * x - 1.0) / q, -2.0 * x / q)


def _klein_distance(p, q) -> float:
    num = 1.0 - p[0] * q[0] - p[1] * q[1]
    den = math.sqrt((1.0 - p[0] ** 2 - p[1] ** 2) * (1.0 - q[0] ** 2 - q[1] ** 2))
    return math.acosh(max(1.0, num / den))


class _BolzaEnumerator:
    """Breadth-first search over group elements whose axes cross the fundamental octagon.

    Each primitive class of length L has lifts whose axis chords inside the
    octagon add up to L, so summing chord/L over elements of translation
    length L counts classes, with powers of shorter classes removed afterwards.
    """

    CELL = 0.5

    def __init__(self, gens: GeneratorSet, norm_bound: float, opts: EnumerationOptions):
        self.gens = gens
        self.norm_bound = float(norm_bound)
        self.opts = opts
        self.word_cap = opts.word_cap or get_word_cap("bolza")
        self.dps = opts.mp_dps or get_mp_dps()
        self.octagon = _Octagon()

        cosh_circumradius = 3 + 2 * math.sqrt(2)
        circumradius = math.acosh(cosh_circumradius)
        max_length = math.log(self.norm_bound)
        # cosh of the largest base-point displacement of an element whose axis
        # passes within the circumradius and translates by at most max_length
        self.cosh_reach = 1 + cosh_circumradius ** 2 * (math.cosh(max_length) - 1)
        self.prune = math.cosh(math.acosh(self.cosh_reach) + circumradius) * (1 + 1e-9)
        root = math.sqrt(self.norm_bound)
        self.max_trace = (root + 1.0 / root) * (1 + 1e-12)
        self.cells: Dict[Tuple[int, int], List[Tuple[float, float, Tuple[float, ...]]]] = {}

    def _centre(self, m):
        a, b, c, d = m
        den = c * c + d * d
        return (a * c + b * d) / den, 1.0 / den

    def _cell(self, x: float, y: float) -> Tuple[int, int]:
        cu = math.floor(math.log(y) / self.CELL)
        return cu, math.floor(x / (self.CELL * math.exp(cu * self.CELL)))

    def _register(self, m) -> bool:
        """Record a tile centre; False when the element was already seen"""
        if self._seen(m):
            return False
        x, y = self._centre(m)
        self.cells.setdefault(self._cell(x, y), []).append((x, y, m))
        return True

    def _seen(self, m) -> bool:
        x, y = self._centre(m)
        cu, _ = self._cell(x, y)
        for du in (-1, 0, 1):
            row = cu + du
            width = self.CELL * math.exp(row * self.CELL)
            base = math.floor(x / width)
            for dx in (-1, 0, 1):
                for px, py, pm in self.cells.get((row, base + dx), ()):
                    if ((x - px) ** 2 + (y - py) ** 2) / (2 * y * py) < 1e-8:
                        if Matrix2(*m, check=False).projectively_close(Matrix2(*pm, check=False)):
                            return True
                        raise NonDiscreteGroupError(
                            "two distinct elements move the base point to the same place"
                        )
        return False

    def _extensions(self, m, word):
        gens = self.gens.generators
        last_inverse = self.gens.inverse_index(word[-1]) if word else -1
        a, b, c, d = m
        for index, g in enumerate(gens):
            if index == last_inverse:
                continue
            n = (a * g.a + b * g.c, a * g.b + b * g.d, c * g.a + d * g.c, c * g.b + d * g.d)
            displacement = (n[0] ** 2 + n[1] ** 2 + n[2] ** 2 + n[3] ** 2) / 2
            if displacement > self.prune:
                continue
            yield n, word + (index,), displacement

    def _search(self):
        identity = (1.0, 0.0, 0.0, 1.0)
        self._register(identity)
        frontier = [(identity, ())]
        candidates = []
        visited = 0
        depth = 0
        while frontier and depth < self.word_cap:
            next_frontier = []
            for m, word in frontier:
                for n, extended, displacement in self._extensions(m, word):
                    if not self._register(n):
                        continue
                    visited += 1
                    trace = abs(n[0] + n[3])
                    if trace <= 2 + 1e-9:
                        raise NonDiscreteGroupError(
                            f"non-hyperbolic element {self.gens.format_word(extended)} with trace {trace!r}"
                        )
                    next_frontier.append((n, extended))
                    if trace <= self.max_trace and displacement <= self.cosh_reach * (1 + 1e-9):
                        candidates.append((n, extended))
            frontier = next_frontier
            depth += 1

        complete = True
        for m, word in frontier:
            for n, _, _ in self._extensions(m, word):
                if not self._seen(n):
                    complete = False
                    break
            if not complete:
                break
        return candidates, visited, depth, complete

    def _chord(self, m) -> Optional[Tuple[float, float]]:
        """(hyperbolic length of the axis inside the octagon, weight)"""
        a, b, c, d = m
        t = a + d
        if t < 0:
            a, b, c, d, t = -a, -b, -c, -d, -t
        disc = math.sqrt(t * t - 4)
        scale = max(abs(a), abs(b), abs(c), abs(d))
        if abs(c) < 1e-14 * scale:
            x1, x2 = math.inf, b / (d - a)
        else:
            x1, x2 = ((a - d) + disc) / (2 * c), ((a - d) - disc) / (2 * c)
        segment = self.octagon.clip(_boundary_point(x1), _boundary_point(x2))
        if segment is None:
            return None
        length = _klein_distance(*segment)
        if length < 1e-12:
            return None
        shared = self.octagon.sides_through(segment[0]) & self.octagon.sides_through(segment[1])
        # A chord along a side is shared with the neighbouring tile
        return length, 0.5 if shared else 1.0

    def run(self) -> LengthSpectrum:
        candidates, visited, depth, complete = self._search()

        contributions = []
        for m, word in candidates:
            chord = self._chord(m)
            if chord is None:
                continue
            if len(word) > EXTENDED_PRECISION_WORD_LENGTH:
                trace = self.gens.word_trace_precise(word, self.dps)
            else:
                trace = abs(m[0] + m[3])
            length = trace_to_length(trace)
            contributions.append((length, trace, word, chord[0] * chord[1]))
        contributions.sort(key=lambda item: (item[0], len(item[2]), item[2]))

        buckets = []
        tol = self.opts.length_tolerance
        for length, trace, word, weight in contributions:
            if buckets and abs(length - buckets[-1]["length"]) < tol * max(1.0, length):
                buckets[-1]["parts"].append(weight / buckets[-1]["length"])
                buckets[-1]["words"].append(word)
            else:
                buckets.append({"length": length, "trace": trace, "parts": [weight / length], "words": [word]})

        classes = []
        settled: List[Tuple[float, int]] = []
        for bucket in buckets:
            length = bucket["length"]
            raw = math.fsum(bucket["parts"])
            for shorter, count in settled:
                k = round(length / shorter)
                if k >= 2 and abs(k * shorter - length) < tol * max(1.0, length):
                    raw -= count / k
            count = int(round(raw))
            if abs(raw - count) > 0.05:
                logger.warning(f"ENUMERATED: multiplicity {raw:.4f} at length {length:.10f} rounded to {count}")
            if count <= 0:
                continue
            settled.append((length, count))
            primitive_words = [w for w in bucket["words"] if is_primitive(w)]
            word = min(primitive_words, key=lambda w: (len(w), w)) if primitive_words else None
            norm = math.exp(length)
            if norm > self.norm_bound * (1 + 1e-12):
                continue
            classes.append(PrimitiveClass.from_trace(
                bucket["trace"], count, self.gens.format_word(word) if word is not None else None
            ))

        if not complete:
            logger.warning(f"ENUMERATED: word cap {self.word_cap} reached before norm bound {self.norm_bound}")
        logger.info(
            f"ENUMERATED: bolza norm_bound={self.norm_bound} elements={visited} depth={depth} "
            f"classes={sum(c.multiplicity for c in classes)} complete={complete}"
        )
        return LengthSpectrum(
            classes=tuple(classes),
            norm_bound=self.norm_bound,
            model="bolza",
            complete=complete,
            options={"backend": "octagon-chords", "word_cap": self.word_cap,
                     "length_tolerance": self.opts.length_tolerance},
        )


def _necklace_subtree(first: Tuple[int, int], start, trace_bound: int, word_cap: int):
    """Count Lyndon syllable sequences beginning with ``first``; returns (counts, words, capped)"""
    counts: Dict[int, int] = {}
    words: Dict[int, Tuple[Tuple[int, int], ...]] = {}
    capped = False

    def is_lyndon(seq) -> bool:
        return all(seq < seq[k:] + seq[:k] for k in range(1, len(seq)))

    def visit(m, seq):
        nonlocal capped
        t = m[0] + m[3]
        if is_lyndon(seq):
            counts[t] = counts.get(t, 0) + 1
            if t not in words or (len(seq), seq) < (len(words[t]), words[t]):
                words[t] = seq
        if len(seq) >= word_cap:
            # cheapest extension appends one L and one R
            if 2 * m[0] + m[1] + m[2] + m[3] <= trace_bound:
                capped = True
            return
        a = 1
        while True:
            ma = (m[0], m[0] * a + m[1], m[2], m[2] * a + m[3])
            if ma[0] + ma[1] + ma[3] > trace_bound:
                break
            b = 1
            while True:
                t_next = ma[0] + b * ma[1] + ma[3]
                if t_next > trace_bound:
                    break
                mb = (ma[0] + b * ma[1], ma[1], ma[2] + b * ma[3], ma[3])
                visit(mb, seq + ((a, b),))
                b += 1
            a += 1

    visit(start, (first,))
    return counts, words, capped


def modular_necklace_spectrum(
    trace_bound: int,
    word_cap: Optional[int] = None,
    workers: Optional[int] = None,
) -> LengthSpectrum:
    """Primitive hyperbolic classes of PSL(2, Z) with trace <= trace_bound.

    Classes are primitive necklaces over {L, R} using both letters, written as
    Lyndon sequences of syllables L^a R^b. ``word_cap`` counts syllables.
    """
    trace_bound = int(trace_bound)
    word_cap = word_cap or get_word_cap("modular")
    workers = workers or get_worker_count()
    # Traces are integers, so the list is complete strictly below the next trace's norm
    norm_bound = math.nextafter(trace_to_norm(max(trace_bound, 2) + 1), 0.0)

    prefixes = []
    a = 1
    while a + 2 <= trace_bound:
        b = 1
        while 2 + a * b <= trace_bound:
            prefixes.append(((a, b), (1 + a * b, a, b, 1)))
            b += 1
        a += 1

    counts: Dict[int, int] = {}
    words: Dict[int, Tuple[Tuple[int, int], ...]] = {}
    capped = False
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: _necklace_subtree(p[0], p[1], trace_bound, word_cap), prefixes))
    for sub_counts, sub_words, sub_capped in results:
        capped = capped or sub_capped
        for t, n in sub_counts.items():
            counts[t] = counts.get(t, 0) + n
        for t, seq in sub_words.items():
            if t not in words or (len(seq), seq) < (len(words[t]), words[t]):
                words[t] = seq

    classes = tuple(
        PrimitiveClass.from_trace(float(t), counts[t], "".join("L" * a + "R" * b for a, b in words[t]))
        for t in sorted(counts)
    )
    complete = not capped
    if capped:
        logger.warning(f"ENUMERATED: syllable cap {word_cap} reached below trace {trace_bound}")
    logger.info(
        f"ENUMERATED: modular trace_bound={trace_bound} classes={sum(counts.values())} complete={complete}"
    )
    return LengthSpectrum(
        classes=classes,
        norm_bound=norm_bound,
        model="modular",
        complete=complete,
        options={"backend": "necklace", "trace_bound": trace_bound, "word_cap": word_cap},
    )
