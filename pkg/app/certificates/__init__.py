"""Global-optimality certificates: d-maps, kernel spectra and orthogonality residuals."""
