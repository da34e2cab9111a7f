from geometry.shapes import Square
from geometry.circle import Circle
