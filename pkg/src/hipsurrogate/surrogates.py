"""Surrogate values for PHI categories.

Every pool-backed generator is an *index space*: a finite, injective map from
``range(capacity)`` to strings. Drawing a surrogate is drawing an index, and
building a pool of K distinct values is sampling K indices without
replacement. Format-preserving kinds (phone, id, alphanumeric) derive their
space from the positional character classes of the original surface, so the
surrogate has the same shape: digits stay digits, upper-case letters stay
upper-case, and everything else is copied verbatim.

Dates, ages and clock times are not drawn from pools; they are moved by a
fixed offset (:class:`OffsetPolicy`) so intervals inside one scope survive.
"""

import configparser
import logging
import re
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from . import dates
from ._rng import py_rng

logger = logging.getLogger(__name__)

GENERATOR_KINDS = (
    "name-list",
    "location-list",
    "hospital-list",
    "organization-list",
    "date-offset",
    "age-offset",
    "phone-format",
    "id-format",
    "alphanumeric",
    "email",
    "url",
    "profession-list",
    "time-offset",
    "passthrough-label",
)
OFFSET_KINDS = frozenset({"date-offset", "age-offset", "time-offset"})
FORMAT_KINDS = frozenset({"phone-format", "id-format", "alphanumeric"})
LIST_KINDS = frozenset(
    {"name-list", "location-list", "hospital-list", "organization-list", "profession-list"}
)
OFFSET_SCOPES = ("per-corpus", "per-patient", "per-document")

DEFAULT_POOL_SIZE = 1000

# default shapes when no original text is available
_DEFAULT_TEMPLATES = {
    "phone-format": "(205) 555-0123",
    "id-format": "00000000",
    "alphanumeric": "AA000000",
}
_URL_WORDS = ("health", "clinic", "care", "med", "family", "group", "labs", "center")
_URL_TLDS = ("com", "org", "net")
_IPV4_RE = re.compile(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}")


class PoolCapacityError(ValueError):
    """Requested more distinct values than a generator can produce."""

    def __init__(self, category, requested, capacity):
        self.category = category
        self.requested = requested
        self.capacity = capacity
        super().__init__(
            f"{category}: pool size {requested} exceeds generator capacity {capacity}"
        )


@dataclass(frozen=True)
class CategorySpec:
    category: str
    generator_kind: str
    critical: bool = False
    vocab: str | None = None

    def __post_init__(self):
        if self.generator_kind not in GENERATOR_KINDS:
            raise ValueError(f"{self.category}: unknown generator kind {self.generator_kind!r}")


class CategoryRegistry:
    """Maps annotation labels (and aliases) to :class:`CategorySpec`."""

    def __init__(self, specs=(), aliases=None):
        self._specs = {}
        for spec in specs:
            self._specs[spec.category.upper()] = spec
        for alias, target in (aliases or {}).items():
            self._specs[alias.upper()] = self._specs[target.upper()]

    @classmethod
    def from_config(cls, path=None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if path is None:
            parser.read_string(_read_data("categories.cfg"))
        else:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        specs, aliases = [], {}
        for section in parser.sections():
            sec = parser[section]
            specs.append(CategorySpec(
                category=section,
                generator_kind=sec.get("kind", "passthrough-label"),
                critical=sec.getboolean("critical", fallback=False),
                vocab=sec.get("vocab"),
            ))
            for alias in sec.get("aliases", "").split(","):
                if alias.strip():
                    aliases[alias.strip()] = section
        return cls(specs, aliases)

    def get(self, label):
        return self._specs.get(label.upper())

    def __contains__(self, label):
        return label.upper() in self._specs

    def __iter__(self):
        seen = set()
        for spec in self._specs.values():
            if spec.category not in seen:
                seen.add(spec.category)
                yield spec

    def is_critical(self, label):
        spec = self.get(label)
        return bool(spec and spec.critical)


@lru_cache(maxsize=None)
def default_registry():
    return CategoryRegistry.from_config()


def _read_data(name):
    return resources.files("hipsurrogate").joinpath("data", name).read_text(encoding="utf-8")


class Vocabulary:
    """Word lists backing the list-based generators.

    Lists are read from the packaged ``data/`` directory unless ``data_dir``
    is given, in which case files found there take precedence. Deployers can
    use this to ship held-out name and place lists.
    """

    def __init__(self, data_dir=None):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            text = None
            if self.data_dir is not None:
                path = self.data_dir / f"{name}.txt"
                if path.exists():
                    text = path.read_text(encoding="utf-8")
            if text is None:
                text = _read_data(f"{name}.txt")
            words = []
            seen = set()
            for line in text.splitlines():
                w = line.strip()
                if w and w not in seen:
                    seen.add(w)
                    words.append(w)
            if not words:
                raise ValueError(f"vocabulary {name!r} is empty")
            self._cache[name] = tuple(words)
        return self._cache[name]


# -- character classes --------------------------------------------------------

_CLASS_ALPHABETS = {"D": string.digits, "U": string.ascii_uppercase, "L": string.ascii_lowercase}


def char_class(ch):
    """'D' for an ASCII digit, 'U'/'L' for ASCII letters, else the char itself."""
    if "0" <= ch <= "9":
        return "D"
    if "A" <= ch <= "Z":
        return "U"
    if "a" <= ch <= "z":
        return "L"
    return ch


def class_signature(s):
    return tuple(char_class(c) for c in s)


# -- index spaces --------------------------------------------------------------

class _ListSpace:
    def __init__(self, words):
        self.words = words
        self.capacity = len(words)

    def render(self, i):
        return self.words[i]


class _ProductSpace:
    """Cartesian product of word lists joined by a formatter."""

    def __init__(self, parts, fmt):
        self.parts = parts
        self.fmt = fmt
        cap = 1
        for p in parts:
            cap *= len(p)
        self.capacity = cap

    def render(self, i):
        picks = []
        for p in reversed(self.parts):
            i, r = divmod(i, len(p))
            picks.append(p[r])
        return self.fmt(*reversed(picks))


class _TemplateSpace:
    """Strings with the positional character classes of a template."""

    def __init__(self, template):
        self.template = template
        self.slots = [(k, _CLASS_ALPHABETS[c]) for k, c in enumerate(class_signature(template))
                      if c in _CLASS_ALPHABETS]
        cap = 1
        for _, alphabet in self.slots:
            cap *= len(alphabet)
        self.capacity = cap

    def render(self, i):
        out = list(self.template)
        for k, alphabet in reversed(self.slots):
            i, r = divmod(i, len(alphabet))
            out[k] = alphabet[r]
        return "".join(out)


class _LabelSpace:
    capacity = 1

    def __init__(self, label):
        self.label = label

    def render(self, i):
        return f"[{self.label}]"


def _name_variant(original):
    if original is None:
        return "full"
    s = original.strip()
    if "," in s:
        return "last_first"
    return "single" if len(s.split()) <= 1 else "full"


def _template_for(spec, original):
    # a template without letters or digits has a single rendering, the original
    if original is not None and any(c in _CLASS_ALPHABETS for c in class_signature(original)):
        return original.strip()
    return _DEFAULT_TEMPLATES[spec.generator_kind]


def shape_key(spec, original):
    """Key under which mentions share a pool (same shape, same pool)."""
    kind = spec.generator_kind
    if kind == "name-list":
        return _name_variant(original)
    if kind in FORMAT_KINDS:
        return "".join(class_signature(_template_for(spec, original)))
    if kind == "url":
        return "ip" if original and _IPV4_RE.fullmatch(original.strip()) else "url"
    return ""


def index_space(spec, original, vocab):
    kind = spec.generator_kind
    if kind == "name-list":
        variant = _name_variant(original)
        if variant == "single":
            return _ListSpace(vocab["first_names"])
        if variant == "last_first":
            return _ProductSpace([vocab["last_names"], vocab["first_names"]],
                                 lambda last, first: f"{last}, {first}")
        return _ProductSpace([vocab["first_names"], vocab["last_names"]],
                             lambda first, last: f"{first} {last}")
    if kind == "location-list":
        name = spec.vocab or "cities"
        if name == "streets":
            numbers = tuple(str(n) for n in range(100, 10000, 7))
            return _ProductSpace([numbers, vocab["last_names"], vocab["street_suffixes"]],
                                 lambda n, w, suf: f"{n} {w} {suf}")
        if name == "landmarks":
            return _ProductSpace([vocab["last_names"], vocab["landmarks"]],
                                 lambda w, suf: f"{w} {suf}")
        return _ListSpace(vocab[name])
    if kind == "hospital-list":
        prefixes = tuple(dict.fromkeys(vocab["cities"] + vocab["last_names"]))
        return _ProductSpace([prefixes, vocab["hospital_suffixes"]],
                             lambda p, suf: f"{p} {suf}")
    if kind == "organization-list":
        return _ProductSpace([vocab["last_names"], vocab["organization_suffixes"]],
                             lambda w, suf: f"{w} {suf}")
    if kind == "profession-list":
        return _ListSpace(vocab[spec.vocab or "professions"])
    if kind in FORMAT_KINDS:
        return _TemplateSpace(_template_for(spec, original))
    if kind == "email":
        return _ProductSpace(
            [vocab["first_names"], vocab["last_names"], vocab["email_domains"]],
            lambda f, l_, d: f"{f.lower()}.{l_.lower()}@{d}",
        )
    if kind == "url":
        if shape_key(spec, original) == "ip":
            octets = tuple(str(n) for n in range(256))
            return _ProductSpace([octets] * 4, lambda a, b, c, d: f"{a}.{b}.{c}.{d}")
        scheme = ""
        if original and "://" in original:
            scheme = original.split("://", 1)[0] + "://"
        return _ProductSpace(
            [vocab["last_names"], _URL_WORDS, _URL_TLDS],
            lambda w, word, tld: f"{scheme}www.{w.lower()}{word}.{tld}",
        )
    if kind == "passthrough-label":
        return _LabelSpace(spec.category)
    raise ValueError(f"{spec.category}: generator kind {kind!r} has no value pool")


def match_case(value, original):
    """Apply the letter case of ``original`` (all-upper / all-lower) to ``value``."""
    if not original:
        return value
    letters = [c for c in original if c.isalpha()]
    if len(letters) > 1:
        if all(c.isupper() for c in letters):
            return value.upper()
        if all(c.islower() for c in letters):
            return value.lower()
    return value


# -- pools ------------------------------------------------------------------------

class SurrogatePool:
    """K distinct surrogate strings for one category (and one shape)."""

    def __init__(self, category, values):
        values = tuple(values)
        if not values:
            raise ValueError(f"{category}: a surrogate pool needs at least one value")
        if len(set(values)) != len(values):
            raise ValueError(f"{category}: pool values must be distinct")
        self.category = category
        self.values = values
        self._folded = None

    @property
    def K(self):
        return len(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def indices_of(self, original):
        """Pool indices whose value equals ``original`` ignoring case."""
        if original is None:
            return frozenset()
        if self._folded is None:
            folded = {}
            for i, v in enumerate(self.values):
                folded.setdefault(v.casefold(), set()).add(i)
            self._folded = folded
        return frozenset(self._folded.get(original.strip().casefold(), ()))

    def __repr__(self):
        return f"SurrogatePool({self.category!r}, K={self.K})"


def build_pool(spec, K=DEFAULT_POOL_SIZE, seed=0, original=None, vocab=None):
    """Deterministically draw ``K`` distinct surrogates for ``spec``.

    ``original`` selects the shape (for format-preserving kinds and name
    layouts); pools for the same ``(spec, shape, K, seed)`` are identical.
    """
    if K < 1:
        raise ValueError("pool size K must be >= 1")
    if spec.generator_kind in OFFSET_KINDS:
        raise ValueError(f"{spec.category}: {spec.generator_kind} values are offsets, not pools")
    vocab = vocab if vocab is not None else Vocabulary()
    space = index_space(spec, original, vocab)
    if K > space.capacity:
        raise PoolCapacityError(spec.category, K, space.capacity)
    rng = py_rng(seed, "pool", spec.category, shape_key(spec, original))
    values, seen = [], set()
    if space.capacity <= 4 * K:
        order = list(range(space.capacity))
        rng.shuffle(order)
        candidates = iter(order)
    else:
        candidates = _sample_stream(rng, space.capacity)
    for i in candidates:
        v = space.render(i)
        if v in seen:
            continue
        seen.add(v)
        values.append(v)
        if len(values) == K:
            break
    if len(values) < K:
        raise PoolCapacityError(spec.category, K, len(values))
    return SurrogatePool(spec.category, values)


def _sample_stream(rng, capacity):
    drawn = set()
    while len(drawn) < capacity:
        i = rng.randrange(capacity)
        if i not in drawn:
            drawn.add(i)
            yield i


# -- offsets --------------------------------------------------------------------

@dataclass(frozen=True)
class OffsetPolicy:
    date_offset_days: int
    age_offset_years: int = 0
    time_offset_minutes: int = 0
    scope: str = "per-patient"

    def __post_init__(self):
        if self.date_offset_days == 0:
            raise ValueError("date_offset_days must be non-zero")
        if abs(self.age_offset_years) > 5:
            raise ValueError("|age_offset_years| must be <= 5")
        if self.scope not in OFFSET_SCOPES:
            raise ValueError(f"scope must be one of {OFFSET_SCOPES}")

    @classmethod
    def draw(cls, rng, scope="per-patient"):
        """Draw days in +/-[30, 365], years in +/-[1, 5], minutes in +/-[1, 720]."""
        sign = rng.choice((-1, 1))
        days = sign * rng.randint(30, 365)
        years = rng.choice((-1, 1)) * rng.randint(1, 5)
        minutes = rng.choice((-1, 1)) * rng.randint(1, 720)
        return cls(days, years, minutes, scope)


def _note(notes, message):
    if notes is None:
        logger.warning(message)
    else:
        notes.append(message)


def offset_date(original, policy, rng=None, dayfirst=False, notes=None):
    """Shift a date surface by ``policy.date_offset_days`` in its own format.

    Unrecognised surfaces become a random MM/DD/YYYY date and a note.
    """
    if original is not None:
        days = policy.date_offset_days
        sign = 1 if days > 0 else -1
        # coarse formats (bare year, weekday) can absorb the offset; nudge it
        for extra in (0, sign, 366 * sign):
            out = dates.shift_date(original, days + extra, dayfirst)
            if out is None:
                break
            if not _same(out, original):
                if extra:
                    _note(notes, f"date {original!r} unchanged by offset; adjusted by {extra} days")
                return out
    _note(notes, f"unparseable date {original!r}; substituted random date")
    return dates.random_date(rng if rng is not None else py_rng(0, "date", original))


_INT_RE = re.compile(r"\d+")


def _same(a, b):
    return a.strip().casefold() == b.strip().casefold()


def offset_age(original, rng, policy, notes=None):
    """Ages under 90 move by the policy offset (clamped to 1..89); 90+ are redrawn in 90..99."""
    m = _INT_RE.search(original or "")
    if m is None:
        _note(notes, f"non-numeric age {original!r}; substituted random age")
        return str(rng.randint(20, 89))
    age = int(m.group())
    if age >= 90:
        new = rng.choice([a for a in range(90, 100) if a != age])
    else:
        step = policy.age_offset_years or 1
        new = min(89, max(1, age + step))
        if new == age:
            # clamped at a bound; move the other way instead
            new = min(89, max(1, age - step))
    return original[: m.start()] + str(new) + original[m.end():]


def offset_time(original, policy, rng=None, notes=None):
    if original is not None:
        minutes = policy.time_offset_minutes or 1
        for extra in (0, 1 if minutes > 0 else -1):
            out = dates.shift_time(original, minutes + extra)
            if out is None:
                break
            if not _same(out, original):
                return out
    _note(notes, f"unparseable time {original!r}; substituted random time")
    return dates.random_time(rng if rng is not None else py_rng(0, "time", original))


# -- one-off generation -----------------------------------------------------------

def generate(spec, original=None, rng=None, vocab=None, policy=None, notes=None, dayfirst=False):
    """A single surrogate for ``spec``.

    ``spec`` may be a :class:`CategorySpec` or a bare label string that is
    looked up in the default registry; unknown labels yield ``"[LABEL]"``.
    """
    rng = rng if rng is not None else py_rng(0, "generate")
    if isinstance(spec, str):
        label = spec
        spec = default_registry().get(label)
        if spec is None:
            _note(notes, f"unregistered category {label!r}; emitted placeholder")
            return f"[{label}]"
    kind = spec.generator_kind
    if kind in OFFSET_KINDS:
        policy = policy if policy is not None else OffsetPolicy.draw(rng)
        if kind == "date-offset":
            return offset_date(original, policy, rng, dayfirst, notes)
        if kind == "age-offset":
            return offset_age(original, rng, policy, notes)
        return offset_time(original, policy, rng, notes)
    vocab = vocab if vocab is not None else Vocabulary()
    space = index_space(spec, original, vocab)
    value = space.render(rng.randrange(space.capacity))
    if kind in LIST_KINDS and original is not None and space.capacity > 1:
        for _ in range(8):
            if value.casefold() != original.strip().casefold():
                break
            value = space.render(rng.randrange(space.capacity))
    if kind in LIST_KINDS:
        value = match_case(value, original)
    return value


class PoolCache:
    """Lazily built pools keyed by ``(category, shape)``.

    Pools depend only on the key, pool size and seed, so separate processes
    holding their own cache agree on every pool. Pools are clamped to the
    generator capacity (with a note) instead of failing, because small
    vocabularies such as US states cannot supply the default 1000 values.
    """

    def __init__(self, registry=None, vocab=None, pool_size=DEFAULT_POOL_SIZE, seed=0):
        self.registry = registry if registry is not None else default_registry()
        self.vocab = vocab if vocab is not None else Vocabulary()
        self.pool_size = pool_size
        self.seed = seed
        self._pools = {}
        self.clamped = {}

    def pool_for(self, spec, original=None):
        key = (spec.category, shape_key(spec, original))
        pool = self._pools.get(key)
        if pool is None:
            try:
                pool = build_pool(spec, self.pool_size, self.seed, original, self.vocab)
            except PoolCapacityError as exc:
                self.clamped[key] = exc.capacity
                pool = build_pool(spec, exc.capacity, self.seed, original, self.vocab)
            self._pools[key] = pool
        return pool

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_pools"] = {}
        return state
