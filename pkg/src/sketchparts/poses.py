"""The eight compass poses and their standard maps."""

import math

POSES = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]
POSE_INDEX = {p: i for i, p in enumerate(POSES)}

# mirroring about the vertical axis swaps east and west components
MIRROR = {
    "N": "N",
    "S": "S",
    "E": "W",
    "W": "E",
    "NE": "NW",
    "NW": "NE",
    "SE": "SW",
    "SW": "SE",
}

# 4-way evaluation folds the perspective views into their horizontal side
MERGE4 = {
    "N": "N",
    "S": "S",
    "E": "E",
    "W": "W",
    "NE": "E",
    "SE": "E",
    "NW": "W",
    "SW": "W",
}

PHRASES = {
    "N": "north",
    "NE": "north-east",
    "E": "east",
    "SE": "south-east",
    "S": "south",
    "SW": "south-west",
    "W": "west",
    "NW": "north-west",
}


def direction(pose):
    """Unit (dx, dy) of a pose in image coordinates (y grows downward)."""
    bearing = {
        "N": 90.0,
        "NE": 45.0,
        "E": 0.0,
        "SE": -45.0,
        "S": -90.0,
        "SW": -135.0,
        "W": 180.0,
        "NW": 135.0,
    }[pose]
    rad = math.radians(bearing)
    return math.cos(rad), -math.sin(rad)
