# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Peridynamic Kelvin-Voigt viscoelasticity: simulator and convergence lab."""

__version__ = "0.1.0"
