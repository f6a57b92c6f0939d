"""Fixed color-name table, hue families, and the material vocabulary.

The RGB values are repo configuration: names present in the common
extended named-color sets use those values; the rest (camel, taupe,
wine, ...) carry widely used hand-assigned values.  Hue families group
the names for same-hue instruction rendering and are frozen here rather
than derived at runtime.
"""

from __future__ import annotations

from .errors import VocabularyError

# name -> (R, G, B) in 0..255
COLOR_RGB: dict[str, tuple[int, int, int]] = {
    "amethyst": (153, 102, 204),
    "azure": (240, 255, 255),
    "beige": (245, 245, 220),
    "black": (0, 0, 0),
    "blue": (0, 0, 255),
    "bronze": (205, 127, 50),
    "brown": (165, 42, 42),
    "camel": (193, 154, 107),
    "copper": (184, 115, 51),
    "coral": (255, 127, 80),
    "cream": (255, 253, 208),
    "crimson": (220, 20, 60),
    "cyan": (0, 255, 255),
    "emerald": (80, 200, 120),
    "gold": (255, 215, 0),
    "gray": (128, 128, 128),
    "green": (0, 128, 0),
    "indigo": (75, 0, 130),
    "khaki": (240, 230, 140),
    "lime": (0, 255, 0),
    "magenta": (255, 0, 255),
    "maroon": (128, 0, 0),
    "navy": (0, 0, 128),
    "olive": (128, 128, 0),
    "orange": (255, 165, 0),
    "peach": (255, 229, 180),
    "pink": (255, 192, 203),
    "plum": (221, 160, 221),
    "purple": (128, 0, 128),
    "red": (255, 0, 0),
    "rose": (255, 0, 127),
    "salmon": (250, 128, 114),
    "silver": (192, 192, 192),
    "slate": (112, 128, 144),
    "tan": (210, 180, 140),
    "taupe": (72, 60, 50),
    "teal": (0, 128, 128),
    "tomato": (255, 99, 71),
    "turquoise": (64, 224, 208),
    "violet": (238, 130, 238),
    "white": (255, 255, 255),
    "wine": (114, 47, 55),
    "yellow": (255, 255, 0),
}

COLORS: tuple[str, ...] = tuple(COLOR_RGB)

MATERIALS: tuple[str, ...] = (
    "cotton",
    "glass",
    "marble",
    "plastic",
    "velvet",
    "denim",
    "lace",
    "mesh",
    "wood",
    "fur",
    "leather",
    "metal",
    "suede",
    "wool",
)

HUE_GROUPS: dict[str, str] = {
    "amethyst": "purple",
    "azure": "neutral",
    "beige": "neutral",
    "black": "neutral",
    "blue": "blue",
    "bronze": "orange",
    "brown": "red",
    "camel": "orange",
    "copper": "orange",
    "coral": "orange",
    "cream": "yellow",
    "crimson": "red",
    "cyan": "cyan",
    "emerald": "green",
    "gold": "yellow",
    "gray": "neutral",
    "green": "green",
    "indigo": "purple",
    "khaki": "yellow",
    "lime": "green",
    "magenta": "purple",
    "maroon": "red",
    "navy": "blue",
    "olive": "yellow",
    "orange": "orange",
    "peach": "orange",
    "pink": "pink",
    "plum": "purple",
    "purple": "purple",
    "red": "red",
    "rose": "pink",
    "salmon": "red",
    "silver": "neutral",
    "slate": "blue",
    "tan": "orange",
    "taupe": "orange",
    "teal": "cyan",
    "tomato": "red",
    "turquoise": "cyan",
    "violet": "purple",
    "white": "neutral",
    "wine": "red",
    "yellow": "yellow",
}


def color_rgb01(name: str) -> tuple[float, float, float]:
    """RGB of a color name scaled to [0, 1]."""
    try:
        r, g, b = COLOR_RGB[name]
    except KeyError:
        raise VocabularyError(f"unknown color name {name!r}") from None
    return (r / 255.0, g / 255.0, b / 255.0)


def hue_group(name: str) -> str:
    try:
        return HUE_GROUPS[name]
    except KeyError:
        raise VocabularyError(f"unknown color name {name!r}") from None


def same_hue(a: str, b: str) -> bool:
    return hue_group(a) == hue_group(b)
