"""
CSUM - Secure CubeSat Software Update Package
"""

__version__ = "1.0.0"
__description__ = "Cập nhật phần mềm an toàn cho CubeSat bằng hash chain và token XOR"
