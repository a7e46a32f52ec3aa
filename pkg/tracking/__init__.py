# stcmot-desk/tracking/__init__.py
# Numerical core: tensor reference ops, TEBM/TDRM, losses, Kalman + cascaded
# association, CLEAR/ID metrics and the synthetic scene generator.
