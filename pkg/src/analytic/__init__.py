# Analytic Module
