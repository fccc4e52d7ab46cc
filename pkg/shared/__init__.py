"""Contracts shared by the offloading services and the command layer."""

from . import schemas

__all__ = ["schemas"]
