# Variational two-point boundary value solver package
