"""Format-preserving date and clock-time shifting.

A surface string is parsed into a calendar date plus a rendering recipe, the
date is moved by a fixed number of days, and the recipe re-renders it so the
separator, zero padding, year width, month spelling and letter case all match
the input. Partial dates are anchored before shifting:

* bare year      -> July 1 of that year
* month + year   -> the 15th of that month
* month + day    -> that day in 2000 (a leap year, so Feb 29 parses)
* month alone    -> the 15th of that month in 2000
* holiday        -> its date in the given year, or 2001 when no year is given

Weekday names shift by ``days mod 7``.
"""

import calendar
import re
from datetime import date, timedelta

MONTHS = [calendar.month_name[i] for i in range(1, 13)]
_MONTH_LOOKUP = {}
for _i, _name in enumerate(MONTHS, start=1):
    _MONTH_LOOKUP[_name.lower()] = _i
    _MONTH_LOOKUP[_name[:3].lower()] = _i
_MONTH_LOOKUP["sept"] = 9

WEEKDAYS = [calendar.day_name[i] for i in range(7)]
_WEEKDAY_LOOKUP = {}
for _i, _name in enumerate(WEEKDAYS):
    _WEEKDAY_LOOKUP[_name.lower()] = _i
    _WEEKDAY_LOOKUP[_name[:3].lower()] = _i
_WEEKDAY_LOOKUP.update({"tues": 1, "weds": 2, "thur": 3, "thurs": 3})

_MONTH_ALT = "|".join(sorted(_MONTH_LOOKUP, key=len, reverse=True))
_WEEKDAY_ALT = "|".join(sorted(_WEEKDAY_LOOKUP, key=len, reverse=True))

DAY_ANCHOR_YEAR = 2000
HOLIDAY_ANCHOR_YEAR = 2001


def _nth_weekday(year, month, weekday, n):
    d = date(year, month, 1)
    d += timedelta(days=(weekday - d.weekday()) % 7)
    return d + timedelta(weeks=n - 1)


def _last_weekday(year, month, weekday):
    last = date(year, month, calendar.monthrange(year, month)[1])
    return last - timedelta(days=(last.weekday() - weekday) % 7)


def _easter(year):
    # anonymous Gregorian algorithm
    a = year % 19
    b, c = divmod(year, 100)
    d, e = divmod(b, 4)
    f = (b + 8) // 25
    g = (b - f + 1) // 3
    h = (19 * a + b - d - g + 15) % 30
    i, k = divmod(c, 4)
    l_ = (32 + 2 * e + 2 * i - h - k) % 7
    m = (a + 11 * h + 22 * l_) // 451
    month, day = divmod(h + l_ - 7 * m + 114, 31)
    return date(year, month, day + 1)


HOLIDAYS = {
    "new year's day": lambda y: date(y, 1, 1),
    "new years day": lambda y: date(y, 1, 1),
    "new year's": lambda y: date(y, 1, 1),
    "new year's eve": lambda y: date(y, 12, 31),
    "new years eve": lambda y: date(y, 12, 31),
    "martin luther king day": lambda y: _nth_weekday(y, 1, 0, 3),
    "mlk day": lambda y: _nth_weekday(y, 1, 0, 3),
    "valentine's day": lambda y: date(y, 2, 14),
    "valentines day": lambda y: date(y, 2, 14),
    "presidents day": lambda y: _nth_weekday(y, 2, 0, 3),
    "presidents' day": lambda y: _nth_weekday(y, 2, 0, 3),
    "st. patrick's day": lambda y: date(y, 3, 17),
    "st patrick's day": lambda y: date(y, 3, 17),
    "easter": _easter,
    "easter sunday": _easter,
    "mother's day": lambda y: _nth_weekday(y, 5, 6, 2),
    "memorial day": lambda y: _last_weekday(y, 5, 0),
    "father's day": lambda y: _nth_weekday(y, 6, 6, 3),
    "juneteenth": lambda y: date(y, 6, 19),
    "independence day": lambda y: date(y, 7, 4),
    "fourth of july": lambda y: date(y, 7, 4),
    "july 4th": lambda y: date(y, 7, 4),
    "labor day": lambda y: _nth_weekday(y, 9, 0, 1),
    "columbus day": lambda y: _nth_weekday(y, 10, 0, 2),
    "halloween": lambda y: date(y, 10, 31),
    "veterans day": lambda y: date(y, 11, 11),
    "veterans' day": lambda y: date(y, 11, 11),
    "thanksgiving": lambda y: _nth_weekday(y, 11, 3, 4),
    "thanksgiving day": lambda y: _nth_weekday(y, 11, 3, 4),
    "christmas eve": lambda y: date(y, 12, 24),
    "christmas": lambda y: date(y, 12, 25),
    "christmas day": lambda y: date(y, 12, 25),
}

_NUMERIC_RE = re.compile(r"(\d{1,4})([/.\-])(\d{1,2})(?:([/.\-])(\d{2,4}))?")
_MONTH_YEAR_NUM_RE = re.compile(r"(\d{1,2})([/.\-])(\d{4})")
_YEAR_RE = re.compile(r"(\d{4})")
_MDY_NAME_RE = re.compile(
    rf"(?P<month>{_MONTH_ALT})(?P<dot>\.?)(?P<sp1>\s+)(?P<day>\d{{1,2}})(?P<ord>st|nd|rd|th)?"
    rf"(?:(?P<comma>,?)(?P<sp2>\s+)(?P<year>\d{{4}}))?",
    re.IGNORECASE,
)
_DMY_NAME_RE = re.compile(
    rf"(?P<day>\d{{1,2}})(?P<ord>st|nd|rd|th)?(?P<sp1>\s+|-)(?P<month>{_MONTH_ALT})(?P<dot>\.?)"
    rf"(?:(?P<comma>,?)(?P<sp2>\s+|-)(?P<year>\d{{2}}|\d{{4}}))?",
    re.IGNORECASE,
)
_MY_NAME_RE = re.compile(
    rf"(?P<month>{_MONTH_ALT})(?P<dot>\.?)(?:(?P<comma>,?)(?P<sp>\s+)(?P<year>\d{{4}}))?",
    re.IGNORECASE,
)
_WEEKDAY_RE = re.compile(rf"(?P<wd>{_WEEKDAY_ALT})(?P<dot>\.?)", re.IGNORECASE)
_WEEKDAY_PREFIX_RE = re.compile(
    rf"(?P<wd>{_WEEKDAY_ALT})(?P<dot>\.?)(?P<sep>,?\s+)(?P<rest>.+)", re.IGNORECASE | re.DOTALL
)
_DATETIME_RE = re.compile(r"(?P<date>\S+)(?P<sep>\s+|T)(?P<time>\d{1,2}:\d{2}.*)", re.DOTALL)
_TIME_RE = re.compile(
    r"(?P<h>\d{1,2}):(?P<m>\d{2})(?::(?P<s>\d{2}))?(?P<sp>\s*)(?P<ampm>[AaPp]\.?[Mm]\.?)?"
)


def _case_like(word, model):
    if model.isupper() and len(model) > 1:
        return word.upper()
    if model.islower():
        return word.lower()
    return word


def _pad(value, width_model, padded=None):
    # a leading zero means zero padding; otherwise follow the date's overall style
    if padded is None:
        padded = len(width_model) >= 2
    if width_model.startswith("0") and len(width_model) >= 2:
        padded = True
    return f"{value:02d}" if padded else str(value)


def _padded_style(*parts):
    """Zero-pad unless some month/day component is written with one digit."""
    parts = [p for p in parts if p is not None]
    if any(len(p) >= 2 and p.startswith("0") for p in parts):
        return True
    return not any(len(p) == 1 for p in parts)


def _expand_year(yy):
    # strptime's %y pivot
    return 2000 + yy if yy <= 68 else 1900 + yy


def _render_year(year, model):
    return f"{year % 100:02d}" if len(model) == 2 else f"{year:04d}"


def _render_month(month, model, dot):
    full = MONTHS[month - 1]
    name = full if len(model) > 4 or model.lower() == full.lower() else full[:3]
    return _case_like(name, model) + dot


def _ordinal(day, model):
    if not model:
        return ""
    if 11 <= day % 100 <= 13:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(day % 10, "th")
    return suffix.upper() if model.isupper() else suffix


def _safe_date(year, month, day):
    try:
        return date(year, month, day)
    except ValueError:
        return None


def _shift_numeric(s, days, dayfirst):
    m = _MONTH_YEAR_NUM_RE.fullmatch(s)
    if m:
        month, sep, year = m.groups()
        d = _safe_date(int(year), int(month), 15)
        if d is None:
            return None
        n = d + timedelta(days=days)
        return f"{_pad(n.month, month)}{sep}{n.year:04d}"
    m = _NUMERIC_RE.fullmatch(s)
    if not m:
        return None
    a, sep1, b, sep2, c = m.groups()
    if len(a) == 4:
        # ISO ordering: YYYY-MM[-DD]
        year = int(a)
        if c is None:
            d = _safe_date(year, int(b), 15)
            if d is None:
                return None
            n = d + timedelta(days=days)
            return f"{n.year:04d}{sep1}{_pad(n.month, b)}"
        if len(c) > 2:
            return None
        d = _safe_date(year, int(b), int(c))
        if d is None:
            return None
        n = d + timedelta(days=days)
        return f"{n.year:04d}{sep1}{_pad(n.month, b)}{sep2}{_pad(n.day, c)}"
    if len(a) > 2 or (c is not None and len(c) == 3):
        return None
    if c is None:
        year, year_model = DAY_ANCHOR_YEAR, None
    else:
        year = int(c) if len(c) == 4 else _expand_year(int(c))
        year_model = c
    first, second = (b, a) if dayfirst else (a, b)
    d = _safe_date(year, int(first), int(second))
    swapped = False
    if d is None:
        d = _safe_date(year, int(second), int(first))
        swapped = True
        if d is None:
            return None
    n = d + timedelta(days=days)
    month_model, day_model = (first, second) if not swapped else (second, first)
    month_first = (not dayfirst) != swapped
    padded = _padded_style(a, b)
    month_s, day_s = _pad(n.month, month_model, padded), _pad(n.day, day_model, padded)
    if month_first:
        head = f"{month_s}{sep1}{day_s}"
    else:
        head = f"{day_s}{sep1}{month_s}"
    if year_model is None:
        return head
    return f"{head}{sep2}{_render_year(n.year, year_model)}"


def _shift_named(s, days):
    m = _MDY_NAME_RE.fullmatch(s)
    if m:
        g = m.groupdict()
        month = _MONTH_LOOKUP[g["month"].lower()]
        year = int(g["year"]) if g["year"] else DAY_ANCHOR_YEAR
        d = _safe_date(year, month, int(g["day"]))
        if d is None:
            return None
        n = d + timedelta(days=days)
        out = (f"{_render_month(n.month, g['month'], g['dot'])}{g['sp1']}"
               f"{_pad(n.day, g['day'])}{_ordinal(n.day, g['ord'])}")
        if g["year"]:
            out += f"{g['comma']}{g['sp2']}{n.year:04d}"
        return out
    m = _DMY_NAME_RE.fullmatch(s)
    if m:
        g = m.groupdict()
        month = _MONTH_LOOKUP[g["month"].lower()]
        if g["year"]:
            year = int(g["year"]) if len(g["year"]) == 4 else _expand_year(int(g["year"]))
        else:
            year = DAY_ANCHOR_YEAR
        d = _safe_date(year, month, int(g["day"]))
        if d is None:
            return None
        n = d + timedelta(days=days)
        out = (f"{_pad(n.day, g['day'])}{_ordinal(n.day, g['ord'])}{g['sp1']}"
               f"{_render_month(n.month, g['month'], g['dot'])}")
        if g["year"]:
            out += f"{g['comma']}{g['sp2']}{_render_year(n.year, g['year'])}"
        return out
    m = _MY_NAME_RE.fullmatch(s)
    if m:
        g = m.groupdict()
        month = _MONTH_LOOKUP[g["month"].lower()]
        year = int(g["year"]) if g["year"] else DAY_ANCHOR_YEAR
        n = date(year, month, 15) + timedelta(days=days)
        out = _render_month(n.month, g["month"], g["dot"])
        if g["year"]:
            out += f"{g['comma']}{g['sp']}{n.year:04d}"
        return out
    return None


def _shift_weekday(s, days):
    m = _WEEKDAY_RE.fullmatch(s)
    if not m:
        return None
    wd = _WEEKDAY_LOOKUP[m.group("wd").lower()]
    return _render_weekday((wd + days) % 7, m.group("wd"), m.group("dot"))


def _render_weekday(wd, model, dot=""):
    full = WEEKDAYS[wd]
    name = full if len(model) > 5 or model.lower() == full.lower() else full[:3]
    return _case_like(name, model) + dot


def _shift_holiday(s, days):
    key = s.lower()
    year = None
    m = re.fullmatch(r"(.+?),?\s+(\d{4})", s)
    if m and m.group(1).lower() in HOLIDAYS:
        key, year = m.group(1).lower(), int(m.group(2))
    fn = HOLIDAYS.get(key)
    if fn is None:
        return None
    n = fn(year or HOLIDAY_ANCHOR_YEAR) + timedelta(days=days)
    out = f"{MONTHS[n.month - 1]} {n.day}"
    if year is not None:
        out += f", {n.year}"
    return out


def _shift_year(s, days):
    m = _YEAR_RE.fullmatch(s)
    if not m:
        return None
    year = int(s)
    if not 1800 <= year <= 2199:
        return None
    n = date(year, 7, 1) + timedelta(days=days)
    return f"{n.year:04d}"


def _shift_core(s, days, dayfirst):
    for attempt in (
        lambda: _shift_numeric(s, days, dayfirst),
        lambda: _shift_year(s, days),
        lambda: _shift_named(s, days),
        lambda: _shift_weekday(s, days),
        lambda: _shift_holiday(s, days),
    ):
        out = attempt()
        if out is not None:
            return out
    return None


def shift_date(surface, days, dayfirst=False):
    """Shift a date-like surface by ``days``; ``None`` if it is not recognised."""
    lead = surface[: len(surface) - len(surface.lstrip())]
    trail = surface[len(surface.rstrip()):]
    s = surface.strip()
    if not s:
        return None
    out = _shift_core(s, days, dayfirst)
    if out is None:
        out = _shift_weekday_prefixed(s, days, dayfirst)
    if out is None:
        m = _DATETIME_RE.fullmatch(s)
        if m:
            head = _shift_core(m.group("date"), days, dayfirst)
            if head is not None:
                out = f"{head}{m.group('sep')}{m.group('time')}"
    if out is None:
        return None
    return f"{lead}{out}{trail}"


def _shift_weekday_prefixed(s, days, dayfirst):
    # "Monday, January 2, 2014": shift the date, then name its real weekday
    m = _WEEKDAY_PREFIX_RE.fullmatch(s)
    if not m:
        return None
    rest = _shift_core(m.group("rest"), days, dayfirst)
    if rest is None:
        return None
    parsed = parse_date(rest, dayfirst)
    if parsed is not None and parsed[1]:
        wd = parsed[0].weekday()
    else:
        wd = (_WEEKDAY_LOOKUP[m.group("wd").lower()] + days) % 7
    return f"{_render_weekday(wd, m.group('wd'), m.group('dot'))}{m.group('sep')}{rest}"


def parse_date(surface, dayfirst=False):
    """Return ``(date, has_full_date)`` for a recognised surface, else ``None``.

    ``has_full_date`` is true only when day, month and year are all explicit.
    Partial dates resolve to their anchor.
    """
    s = surface.strip()
    m = _NUMERIC_RE.fullmatch(s)
    if m:
        a, _, b, _, c = m.groups()
        if len(a) == 4 and c is not None and len(c) <= 2:
            d = _safe_date(int(a), int(b), int(c))
            return (d, True) if d else None
        if len(a) <= 2 and c is not None and len(c) in (2, 4):
            year = int(c) if len(c) == 4 else _expand_year(int(c))
            first, second = (int(b), int(a)) if dayfirst else (int(a), int(b))
            d = _safe_date(year, first, second) or _safe_date(year, second, first)
            return (d, True) if d else None
    m = _MDY_NAME_RE.fullmatch(s)
    if m and m.group("year"):
        d = _safe_date(int(m.group("year")), _MONTH_LOOKUP[m.group("month").lower()],
                       int(m.group("day")))
        return (d, True) if d else None
    m = _DMY_NAME_RE.fullmatch(s)
    if m and m.group("year"):
        y = m.group("year")
        year = int(y) if len(y) == 4 else _expand_year(int(y))
        d = _safe_date(year, _MONTH_LOOKUP[m.group("month").lower()], int(m.group("day")))
        return (d, True) if d else None
    if _YEAR_RE.fullmatch(s) and 1800 <= int(s) <= 2199:
        return date(int(s), 7, 1), False
    return None


def random_date(rng, start_year=1990, end_year=2030):
    """A canonical MM/DD/YYYY date, used when a surface cannot be parsed."""
    lo = date(start_year, 1, 1).toordinal()
    hi = date(end_year, 12, 31).toordinal()
    d = date.fromordinal(rng.randint(lo, hi))
    return f"{d.month:02d}/{d.day:02d}/{d.year:04d}"


def shift_time(surface, minutes):
    """Shift an ``H:MM[:SS][ am/pm]`` clock time, keeping its format."""
    lead = surface[: len(surface) - len(surface.lstrip())]
    trail = surface[len(surface.rstrip()):]
    m = _TIME_RE.fullmatch(surface.strip())
    if not m:
        return None
    h, mi = int(m.group("h")), int(m.group("m"))
    sec = m.group("s")
    ampm = m.group("ampm")
    if mi > 59 or (sec is not None and int(sec) > 59):
        return None
    if ampm:
        if not 1 <= h <= 12:
            return None
        pm = ampm[0] in "pP"
        h = h % 12 + (12 if pm else 0)
    elif h > 23:
        return None
    total = (h * 60 + mi + minutes) % (24 * 60)
    nh, nm = divmod(total, 60)
    if ampm:
        out_pm = nh >= 12
        h12 = nh % 12 or 12
        letter = ("p" if out_pm else "a")
        if ampm[0].isupper():
            letter = letter.upper()
        new_ampm = letter + ampm[1:]
        hour = _pad(h12, m.group("h"), padded=m.group("h").startswith("0"))
    else:
        new_ampm = ""
        hour = _pad(nh, m.group("h"))
    out = f"{hour}:{nm:02d}"
    if sec is not None:
        out += f":{sec}"
    out += f"{m.group('sp') if ampm else ''}{new_ampm}"
    return f"{lead}{out}{trail}"


def random_time(rng):
    return f"{rng.randrange(24):02d}:{rng.randrange(60):02d}"
