"""Independent reference simulators used to validate the MPS backend.

Dense state-vector and density-matrix evolution for small systems, an MPO
density evolver for medium systems, and a stabilizer tableau for Clifford
circuits. These deliberately share no linear-algebra code with sebd.mps.
"""
