"""python -m saliency_fs 진입점"""

from saliency_fs.main import main

main()
