"""Well-posed invertible 1x1 convolutions and invertible conversion networks.

A numerical toolkit built around a single idea: dimension-reducing 1x1
convolutions can be made invertible by augmenting the kernel with rows that
are supervised to reproduce spatially shifted copies of the output, so the
reverse map is an ordinary left inverse instead of a random draw.  The
package provides the layer itself, affine-coupling based invertible
networks assembled from it, task adapters for image hiding, rescaling and
decolorization, a small reverse-mode tape to train everything, and
brute-force verification oracles for the underlying linear-algebra claims.
"""

__version__ = "0.1.0"
