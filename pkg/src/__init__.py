# SLE Lab Package
