"""Quantization on the periodic hexagonal cell: cell-energy forms, point flow, deformation flow."""
