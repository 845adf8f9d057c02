# Lattice-LMA toolkit package
