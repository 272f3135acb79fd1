"""Second-variation toolkit for Perelman's nu-entropy at Ricci solitons.

Importing the package switches jax to double precision; every identity
check in here depends on it.
"""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
