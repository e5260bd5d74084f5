"""Core configuration module."""

from .config import settings, get_settings, Settings
